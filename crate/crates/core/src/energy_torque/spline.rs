//! Penalized cubic regression splines on the sample abscissae.
//!
//! The spline space is the not-a-knot cubic space: one B-spline per sample,
//! interior knots at every sample except the second and the second to last.
//! With `lambda = 0` the fit interpolates and reproduces cubics exactly;
//! the roughness penalty `int f''^2` never touches linear functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EnergyError;

pub const MIN_SPLINE_SAMPLES: usize = 8;

/// Smoothing request for [`fit_spline`](super::fit_spline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Generalized cross-validation over a log grid of penalties.
    #[default]
    Auto,
    Fixed(f64),
}

/// Search range of the scale-free penalty and grid density per decade.
const GCV_LOG10_RANGE: (f64, f64) = (-10.0, 4.0);
const GCV_STEPS_PER_DECADE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineModel {
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// Penalty weight actually applied to `int f''^2`.
    pub lambda: f64,
    /// GCV score at the chosen penalty, when it was searched.
    pub gcv: Option<f64>,
    /// Trace of the smoother matrix.
    pub effective_dof: f64,
}

const DEGREE: usize = 3;

impl SplineModel {
    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    fn check(&self, x: f64) -> Result<(), EnergyError> {
        let (lo, hi) = self.range();
        let tol = 1e-12 * (hi - lo);
        if x.is_finite() && x >= lo - tol && x <= hi + tol {
            Ok(())
        } else {
            Err(EnergyError::OutOfRange { x, lo, hi })
        }
    }

    fn eval(&self, x: f64, order: usize) -> f64 {
        let (lo, hi) = self.range();
        let x = x.clamp(lo, hi);
        let span = find_span(&self.knots, self.coefficients.len(), x);
        let ders = basis_ders(&self.knots, span, x, order);
        (0..=DEGREE)
            .map(|j| ders[order][j] * self.coefficients[span - DEGREE + j])
            .sum()
    }

    pub fn value(&self, x: f64) -> Result<f64, EnergyError> {
        self.check(x)?;
        Ok(self.eval(x, 0))
    }

    pub fn derivative(&self, x: f64) -> Result<f64, EnergyError> {
        self.check(x)?;
        Ok(self.eval(x, 1))
    }

    pub fn second_derivative(&self, x: f64) -> Result<f64, EnergyError> {
        self.check(x)?;
        Ok(self.eval(x, 2))
    }
}

/// Knot span index `s` with `knots[s] <= x < knots[s + 1]`, clamped to the
/// last non-empty span at the right end.
fn find_span(knots: &[f64], n_basis: usize, x: f64) -> usize {
    if x >= knots[n_basis] {
        return n_basis - 1;
    }
    let (mut lo, mut hi) = (DEGREE, n_basis);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Nonzero basis functions on `span` and their derivatives up to `n`,
/// `ders[k][j]` being the k-th derivative of basis `span - 3 + j`.
fn basis_ders(knots: &[f64], span: usize, x: f64, n: usize) -> Vec<[f64; DEGREE + 1]> {
    let p = DEGREE;
    let mut ndu = [[0.0; DEGREE + 1]; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![[0.0; DEGREE + 1]; n + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = [[0.0; DEGREE + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n.min(p) {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
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
    let mut factor = p as f64;
    for (k, row) in ders.iter_mut().enumerate().skip(1) {
        for v in row.iter_mut() {
            *v *= factor;
        }
        factor *= (p - k) as f64;
    }
    ders
}

fn not_a_knot_vector(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut knots = vec![x[0]; DEGREE + 1];
    knots.extend_from_slice(&x[2..n - 2]);
    knots.extend(std::iter::repeat(x[n - 1]).take(DEGREE + 1));
    knots
}

struct Design {
    knots: Vec<f64>,
    b: DMatrix<f64>,
    omega: DMatrix<f64>,
}

fn design(x: &[f64]) -> Design {
    let n = x.len();
    let knots = not_a_knot_vector(x);
    let mut b = DMatrix::zeros(n, n);
    for (i, &xi) in x.iter().enumerate() {
        let span = find_span(&knots, n, xi);
        let d = basis_ders(&knots, span, xi, 0);
        for j in 0..=DEGREE {
            b[(i, span - DEGREE + j)] = d[0][j];
        }
    }
    // f'' is linear on each span, so two-point Gauss integrates f''^2 exactly
    let mut omega = DMatrix::zeros(n, n);
    let g = 0.5 / 3f64.sqrt();
    for span in DEGREE..n {
        let (a, c) = (knots[span], knots[span + 1]);
        if c <= a {
            continue;
        }
        let h = c - a;
        for xi in [0.5 - g, 0.5 + g] {
            let d = basis_ders(&knots, span, a + xi * h, 2);
            for i in 0..=DEGREE {
                for j in 0..=DEGREE {
                    omega[(span - DEGREE + i, span - DEGREE + j)] += 0.5 * h * d[2][i] * d[2][j];
                }
            }
        }
    }
    Design { knots, b, omega }
}

struct Fit {
    coefficients: DVector<f64>,
    trace: f64,
    rss: f64,
}

fn fit_with(d: &Design, y: &DVector<f64>, lambda: f64) -> Result<Fit, EnergyError> {
    let n = y.len();
    if lambda == 0.0 {
        let c = d
            .b
            .clone()
            .lu()
            .solve(y)
            .ok_or_else(|| EnergyError::Fit("collocation matrix is singular".into()))?;
        return Ok(Fit {
            coefficients: c,
            trace: n as f64,
            rss: 0.0,
        });
    }
    let btb = d.b.transpose() * &d.b;
    let m = &btb + &d.omega * lambda;
    let chol = m
        .cholesky()
        .ok_or_else(|| EnergyError::Fit(format!("penalized normal matrix not positive definite at lambda {lambda:e}")))?;
    let c = chol.solve(&(d.b.transpose() * y));
    let trace = chol.solve(&btb).trace();
    let r = &d.b * &c - y;
    Ok(Fit {
        coefficients: c,
        trace,
        rss: r.norm_squared(),
    })
}

pub(super) fn fit(x: &[f64], y: &[f64], smoothing: Smoothing) -> Result<SplineModel, EnergyError> {
    let n = x.len();
    if n < MIN_SPLINE_SAMPLES {
        return Err(EnergyError::InsufficientData {
            need: MIN_SPLINE_SAMPLES,
            got: n,
        });
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EnergyError::Fit("abscissae must be strictly increasing and all values finite".into()));
    }
    let d = design(x);
    // fit deviations from the mean so the penalty search sees the same
    // numbers for curves that differ by a constant
    let mean = y.iter().sum::<f64>() / n as f64;
    let yv = DVector::from_iterator(n, y.iter().map(|v| v - mean));
    let (lambda, gcv) = match smoothing {
        Smoothing::Fixed(l) => {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(EnergyError::Fit(format!("smoothing must be finite and >= 0, got {l}")));
            }
            (l, None)
        }
        Smoothing::Auto => {
            let scale = (d.b.transpose() * &d.b).trace() / d.omega.trace();
            let (lo, hi) = GCV_LOG10_RANGE;
            let steps = ((hi - lo) as usize) * GCV_STEPS_PER_DECADE;
            let mut best: Option<(f64, f64)> = None;
            for k in 0..=steps {
                let lambda = scale * 10f64.powf(lo + (hi - lo) * k as f64 / steps as f64);
                let f = fit_with(&d, &yv, lambda)?;
                let denom = n as f64 - f.trace;
                if denom <= 0.0 {
                    continue;
                }
                let v = n as f64 * f.rss / (denom * denom);
                if best.is_none_or(|(_, bv)| v < bv) {
                    best = Some((lambda, v));
                }
            }
            let (l, v) = best.ok_or_else(|| EnergyError::Fit("no admissible smoothing parameter".into()))?;
            (l, Some(v))
        }
    };
    let f = fit_with(&d, &yv, lambda)?;
    Ok(SplineModel {
        knots: d.knots,
        coefficients: f.coefficients.iter().map(|c| c + mean).collect(),
        lambda,
        gcv,
        effective_dof: f.trace,
    })
}
