//! Scalar types the metric and agreement math is generic over.
//!
//! `f64` and `f32` are the everyday choice. [`Exact`] (an arbitrary
//! precision rational) keeps count quotients such as `3/5` exact, so values
//! coming from different tasks compare equal when they are mathematically
//! equal.

use std::fmt::Debug;

use num::{BigInt, BigRational, Num, ToPrimitive};

/// Arbitrary precision rational scalar.
pub type Exact = BigRational;

pub trait Scalar: Num + Clone + PartialOrd + Debug + ToPrimitive + Send + Sync + 'static {
    /// `numer / denom`. `denom` must be non-zero.
    fn from_ratio(numer: u64, denom: u64) -> Self;

    /// Lossy for `f32`, exact for rationals. `None` for non-finite input.
    fn from_f64(value: f64) -> Option<Self>;

    fn from_count(n: usize) -> Self {
        Self::from_ratio(n as u64, 1)
    }

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// True when the value is not comparable with itself (NaN).
    fn is_unordered(&self) -> bool {
        self.partial_cmp(self).is_none()
    }
}

impl Scalar for f64 {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        numer as f64 / denom as f64
    }

    fn from_f64(value: f64) -> Option<Self> {
        value.is_finite().then_some(value)
    }
}

impl Scalar for f32 {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        (numer as f64 / denom as f64) as f32
    }

    fn from_f64(value: f64) -> Option<Self> {
        value.is_finite().then_some(value as f32)
    }
}

impl Scalar for BigRational {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn from_f64(value: f64) -> Option<Self> {
        BigRational::from_float(value)
    }
}

/// Arithmetic mean, `None` for an empty slice.
pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().cloned().fold(T::zero(), |acc, v| acc + v);
    Some(sum / T::from_count(values.len()))
}

/// Rounds half away from zero to `places` decimals.
///
/// Works on the shortest decimal representation of the float, so `0.665`
/// rounds to `0.67` even though its binary value is slightly below.
pub fn round_half_away(value: f64, places: u32) -> f64 {
    if !value.is_finite() {
        return value;
    }
    let text = format!("{}", value.abs());
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text.as_str(), ""),
    };
    let places = places as usize;
    if frac_part.len() <= places {
        return value;
    }
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().take(places))
        .map(|b| b - b'0')
        .collect();
    if frac_part.as_bytes()[places] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let mut out = String::with_capacity(digits.len() + 2);
    if value < 0.0 {
        out.push('-');
    }
    out.extend(digits[..split].iter().map(|d| char::from(b'0' + d)));
    if places > 0 {
        out.push('.');
        out.extend(digits[split..].iter().map(|d| char::from(b'0' + d)));
    }
    out.parse().unwrap_or(value)
}

/// Fixed two-decimal rendering after half-away-from-zero rounding.
pub fn format_2dp(value: f64) -> String {
    format!("{:.2}", round_half_away(value, 2))
}
