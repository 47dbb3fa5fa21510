//! Complex-vector primitives shared by every other module.
//!
//! Two transform conventions are supported. [`Scaling::Unitary`] divides both
//! directions by `sqrt(n)`; [`Scaling::Plain`] leaves the forward transform
//! unscaled and puts the full `1/n` on the inverse, so that the channel
//! frequency response of a zero-padded impulse response `h` is simply
//! `dft(h, Scaling::Plain)`.
//!
//! Transform lengths must be powers of two. The fast path is backed by
//! `rustfft`; [`naive_dft`] is a direct quadratic summation kept as an
//! independent reference.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::Deref;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

/// Fixed-length sequence of finite complex samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec(Vec<Complex64>);

impl ComplexVec {
    /// Wraps `data`, rejecting empty input and non-finite samples.
    pub fn new(data: Vec<Complex64>) -> Result<Self> {
        if data.is_empty() {
            return Err(invalid("complex vector must be non-empty"));
        }
        if let Some(i) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self(data))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); n])
    }

    /// Builds a vector from real samples.
    pub fn from_real(data: &[f64]) -> Result<Self> {
        Self::new(data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    // Internal constructor for buffers produced by our own arithmetic.
    pub(crate) fn from_trusted(data: Vec<Complex64>) -> Self {
        debug_assert!(!data.is_empty());
        debug_assert!(data.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        Self(data)
    }
}

impl Deref for ComplexVec {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl TryFrom<Vec<Complex64>> for ComplexVec {
    type Error = Error;

    fn try_from(data: Vec<Complex64>) -> Result<Self> {
        Self::new(data)
    }
}

/// Normalization convention of a transform pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// `1/sqrt(n)` in both directions.
    Unitary,
    /// No factor forward, `1/n` inverse.
    Plain,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn check_transform_len(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("transform of zero-length input"));
    }
    if !n.is_power_of_two() {
        return Err(invalid(format!("transform length {n} is not a power of two")));
    }
    Ok(())
}

/// In-place forward transform without scaling. Length must be a power of two.
pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse transform without scaling. Length must be a power of two.
pub(crate) fn ifft_in_place(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
}

/// Forward DFT, `X_k = c * sum_t x_t e^{-j 2 pi k t / n}`.
pub fn dft(x: &[Complex64], scaling: Scaling) -> Result<ComplexVec> {
    check_transform_len(x.len())?;
    let mut buf = x.to_vec();
    fft_in_place(&mut buf);
    if scaling == Scaling::Unitary {
        let s = 1.0 / (x.len() as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
    }
    Ok(ComplexVec::new(buf)?)
}

/// Inverse DFT, `x_t = c * sum_k X_k e^{+j 2 pi k t / n}`.
pub fn idft(x: &[Complex64], scaling: Scaling) -> Result<ComplexVec> {
    check_transform_len(x.len())?;
    let mut buf = x.to_vec();
    ifft_in_place(&mut buf);
    let n = x.len() as f64;
    let s = match scaling {
        Scaling::Unitary => 1.0 / n.sqrt(),
        Scaling::Plain => 1.0 / n,
    };
    buf.iter_mut().for_each(|z| *z *= s);
    Ok(ComplexVec::new(buf)?)
}

/// Direct `O(n^2)` summation DFT. Accepts any length; used as a reference.
pub fn naive_dft(x: &[Complex64], scaling: Scaling) -> Result<ComplexVec> {
    naive_transform(x, -1.0, scaling, false)
}

/// Direct `O(n^2)` summation inverse DFT.
pub fn naive_idft(x: &[Complex64], scaling: Scaling) -> Result<ComplexVec> {
    naive_transform(x, 1.0, scaling, true)
}

fn naive_transform(x: &[Complex64], sign: f64, scaling: Scaling, inverse: bool) -> Result<ComplexVec> {
    let n = x.len();
    if n == 0 {
        return Err(invalid("transform of zero-length input"));
    }
    let scale = match (scaling, inverse) {
        (Scaling::Unitary, _) => 1.0 / (n as f64).sqrt(),
        (Scaling::Plain, false) => 1.0,
        (Scaling::Plain, true) => 1.0 / n as f64,
    };
    let out = (0..n)
        .map(|k| {
            let acc: Complex64 = x
                .iter()
                .enumerate()
                .map(|(t, &v)| v * unit_phase(sign * ((k * t) % n) as f64 / n as f64))
                .sum();
            acc * scale
        })
        .collect();
    ComplexVec::new(out)
}

/// `e^{j 2 pi fraction}`.
#[inline]
pub fn unit_phase(fraction: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * fraction)
}

/// `e^{j 2 pi num / den}` with the numerator reduced modulo `den` first, so
/// large integer arguments keep full precision.
#[inline]
pub fn root_of_unity(num: i64, den: usize) -> Complex64 {
    let r = num.rem_euclid(den as i64);
    unit_phase(r as f64 / den as f64)
}

/// Cyclic convolution `y_n = sum_d h_d x_{(n-d) mod n}`; `h` may be shorter
/// than `x` (implicitly zero-padded).
pub fn circular_convolve(x: &[Complex64], h: &[Complex64]) -> Result<ComplexVec> {
    let n = x.len();
    if n == 0 {
        return Err(invalid("convolution of zero-length input"));
    }
    if h.len() > n {
        return Err(invalid(format!("kernel length {} exceeds signal length {n}", h.len())));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (d, &hd) in h.iter().enumerate() {
        if hd == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += hd * x[(i + n - d) % n];
        }
    }
    ComplexVec::new(y)
}

pub fn norm(x: &[Complex64]) -> f64 {
    norm_sqr(x).sqrt()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest elementwise modulus of `a - b`.
pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
