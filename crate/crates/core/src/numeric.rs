//! Small numeric helpers shared across modules.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Dim, Matrix, RawStorage};

/// Neumaier's variant of Kahan summation.
///
/// Summation order is the iteration order, so results are bit-stable for a
/// fixed input sequence.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `Γ(n/2)` for a positive integer `n`, by exact recurrence from `Γ(1/2)` or `Γ(1)`.
pub fn gamma_half(n: u32) -> f64 {
    assert!(n > 0, "gamma_half(0) is a pole");
    let (mut value, mut arg2) = if n.is_multiple_of(2) { (1.0, 2) } else { (PI.sqrt(), 1) };
    while arg2 < n {
        value *= arg2 as f64 / 2.0;
        arg2 += 2;
    }
    value
}

/// Least-squares line through `(xs, ys)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len(), "fit_line: length mismatch");
    assert!(xs.len() >= 2, "fit_line needs at least two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    LineFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    }
}

/// Slope of `log y` against `log x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_line(&lx, &ly)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// `aᵀ b` through a blocked kernel; nalgebra's own `tr_mul` is a loop of dot
/// products and dominates basis construction for large rules.
pub fn tr_mul<R1, C1, S1, R2, C2, S2>(a: &Matrix<f64, R1, C1, S1>, b: &Matrix<f64, R2, C2, S2>) -> DMatrix<f64>
where
    R1: Dim,
    C1: Dim,
    R2: Dim,
    C2: Dim,
    S1: RawStorage<f64, R1, C1>,
    S2: RawStorage<f64, R2, C2>,
{
    let (k, m) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(k, kb, "tr_mul: inner dimensions differ");
    let mut out = DMatrix::<f64>::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    let (ars, acs) = a.strides();
    let (brs, bcs) = b.strides();
    // SAFETY: the pointers and strides describe live matrices of the stated
    // shapes, and `out` is a fresh contiguous column-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.ptr(),
            acs as isize,
            ars as isize,
            b.data.ptr(),
            brs as isize,
            bcs as isize,
            0.0,
            out.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    out
}
