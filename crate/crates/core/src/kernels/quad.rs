//! Adaptive Simpson quadrature and a semi-infinite variant that splits at a
//! cut point and adds an analytic tail bound from the integrand's decay class.

use crate::{Error, Result, Scalar};

pub const REL_TOL: f64 = 1e-8;
pub const ABS_FLOOR: f64 = 1e-12;
pub const TAIL_CUT: f64 = 1e-14;
pub const TAIL_REL: f64 = 1e-10;
const MAX_DEPTH: u32 = 40;
const MIN_DEPTH: u32 = 3;

/// Tail class of a nonnegative integrand on `[T, ∞)`.
///
/// `Power(k)` means the integrand is eventually bounded by `v·((1+s)/(1+T))^{-k}`
/// where `v` is its value at `T`; `Exp(c)` means bounded by `v·e^{-c(s-T)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay<T> {
    Zero,
    Compact(T),
    Exp(T),
    Power(T),
}

impl<T: Scalar> Decay<T> {
    /// Upper bound on `∫_T^∞ φ` given `|φ(T)| = v`; `∞` if the class gives none.
    pub fn tail(&self, v: T, t: T) -> T {
        match *self {
            Decay::Zero => T::zero(),
            Decay::Compact(end) => {
                if t >= end {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
            Decay::Exp(c) => v / c,
            Decay::Power(k) => {
                if k <= T::one() {
                    T::infinity()
                } else {
                    v * (T::one() + t) / (k - T::one())
                }
            }
        }
    }

    pub fn integrable(&self) -> bool {
        match *self {
            Decay::Power(k) => k > T::one(),
            _ => true,
        }
    }

    /// The slower of two classes (the class of a sum).
    pub fn slower(self, other: Decay<T>) -> Decay<T> {
        use Decay::*;
        match (self, other) {
            (Zero, x) | (x, Zero) => x,
            (Power(a), Power(b)) => Power(a.min(b)),
            (Power(a), _) | (_, Power(a)) => Power(a),
            (Exp(a), Exp(b)) => Exp(a.min(b)),
            (Exp(a), _) | (_, Exp(a)) => Exp(a),
            (Compact(a), Compact(b)) => Compact(a.max(b)),
        }
    }

    /// Class after multiplying by a polynomial-type factor of degree `deg`
    /// (a logarithm counts as a small positive degree).
    pub fn weighted(self, deg: T) -> Decay<T> {
        match self {
            Decay::Exp(c) => Decay::Exp(c * T::lit(0.9)),
            Decay::Power(k) => Decay::Power(k - deg),
            x => x,
        }
    }
}

fn tolerances<T: Scalar>() -> (T, T) {
    let rel = T::lit(REL_TOL).max(T::epsilon() * T::lit(64.0));
    let abs = T::lit(ABS_FLOOR).max(T::min_positive_value() * T::lit(1e6));
    (rel, abs)
}

/// Adaptive Simpson on a bounded interval.
pub fn simpson<T: Scalar>(f: &dyn Fn(T) -> T, a: T, b: T) -> Result<T> {
    if b <= a {
        return Ok(T::zero());
    }
    let (rel, abs) = tolerances::<T>();
    let two = T::lit(2.0);
    let m = (a + b) / two;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    let v = step(f, a, fa, m, fm, b, fb, whole, rel, abs / (b - a), MAX_DEPTH)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Integrability { factor: "integrand", detail: "non-finite quadrature".into() })
    }
}

#[allow(clippy::too_many_arguments)]
fn step<T: Scalar>(f: &dyn Fn(T) -> T, a: T, fa: T, m: T, fm: T, b: T, fb: T, whole: T, rel: T, abs_density: T, depth: u32) -> Result<T> {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let four = T::lit(4.0);
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let (flm, frm) = (f(lm), f(rm));
    if !(flm.is_finite() && frm.is_finite()) {
        return Err(Error::Integrability { factor: "integrand", detail: format!("non-finite value near {}", lm) });
    }
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let delta = left + right - whole;
    let tol = (abs_density * (b - a)).max(rel * (left + right).abs());
    let settled = MAX_DEPTH - depth >= MIN_DEPTH && delta.abs() <= T::lit(15.0) * tol;
    if depth == 0 || settled || m <= a || b <= m {
        return Ok(left + right + delta / T::lit(15.0));
    }
    Ok(step(f, a, fa, lm, flm, m, fm, left, rel, abs_density, depth - 1)?
        + step(f, m, fm, rm, frm, b, fb, right, rel, abs_density, depth - 1)?)
}

/// Integrates over `[a, b]` after splitting at the given breakpoints and into
/// geometrically growing chunks.
pub fn piecewise<T: Scalar>(f: &dyn Fn(T) -> T, a: T, b: T, breaks: &[T]) -> Result<T> {
    if b <= a {
        return Ok(T::zero());
    }
    let mut cuts = vec![a, b];
    let mut w = T::one();
    let mut x = a + w;
    while x < b {
        cuts.push(x);
        w = w * T::lit(2.0);
        x = a + w;
    }
    cuts.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut sum = T::zero();
    for w in cuts.windows(2) {
        sum = sum + simpson(f, w[0], w[1])?;
    }
    Ok(sum)
}

/// `∫_a^∞ φ`: integrates over doubling chunks until the class tail bound at
/// the chunk end drops below `TAIL_CUT` (or below `TAIL_REL` of the head),
/// then adds that bound.
pub fn semi_infinite<T: Scalar>(f: &dyn Fn(T) -> T, a: T, decay: Decay<T>, breaks: &[T]) -> Result<T> {
    if let Decay::Zero = decay {
        return Ok(T::zero());
    }
    if !decay.integrable() {
        return Err(Error::Integrability { factor: "integrand", detail: format!("tail class {:?}", decay) });
    }
    let cut = T::lit(TAIL_CUT).max(T::epsilon() * T::lit(1e-2));
    let rel = T::lit(TAIL_REL).max(T::epsilon());
    let (mut lo, mut w, mut head) = (a, T::one(), T::zero());
    loop {
        let hi = a + w;
        head = head + piecewise(f, lo, hi, breaks)?;
        let tail = decay.tail(f(hi).abs(), hi);
        if tail <= cut.max(rel * head.abs()) {
            return Ok(head + tail);
        }
        lo = hi;
        w = w * T::lit(2.0);
        if w > T::lit(1e15) {
            return Err(Error::Integrability { factor: "integrand", detail: "tail never drops below cut".into() });
        }
    }
}
