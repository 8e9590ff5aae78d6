//! Exact decimal rounding for table cells.
//!
//! Floats are rounded through their shortest round-trip decimal form so a
//! value printed as `0.9135` rounds like the decimal 0.9135, not like the
//! nearest binary double below it.

use std::fmt;
use std::str::FromStr;

/// `mantissa * 10^-scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decimal {
    mantissa: i128,
    scale: u32,
}

impl Decimal {
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        format!("{x}").parse().ok()
    }

    /// Rounds to `places` fractional digits, ties to even.
    pub fn round_half_even(self, places: u32) -> Self {
        if self.scale <= places {
            return self.rescale(places);
        }
        let div = 10i128.pow(self.scale - places);
        let q = self.mantissa.div_euclid(div);
        let r = self.mantissa.rem_euclid(div);
        let twice = 2 * r;
        let q = if twice > div || (twice == div && q % 2 != 0) {
            q + 1
        } else {
            q
        };
        Self {
            mantissa: q,
            scale: places,
        }
    }

    /// Exact arithmetic mean of two decimals.
    pub fn mean(a: Self, b: Self) -> Self {
        let scale = a.scale.max(b.scale);
        let sum = a.rescale(scale).mantissa + b.rescale(scale).mantissa;
        Self {
            mantissa: sum * 5,
            scale: scale + 1,
        }
    }

    fn rescale(self, scale: u32) -> Self {
        debug_assert!(scale >= self.scale);
        Self {
            mantissa: self.mantissa * 10i128.pow(scale - self.scale),
            scale,
        }
    }
}

impl FromStr for Decimal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty()
            || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
            || int.len() + frac.len() > 36
        {
            return Err(format!("not a plain decimal: `{s}`"));
        }
        let digits = format!("{int}{frac}");
        let mantissa: i128 = digits
            .parse()
            .map_err(|_| format!("not a plain decimal: `{s}`"))?;
        Ok(Self {
            mantissa: if neg { -mantissa } else { mantissa },
            scale: frac.len() as u32,
        })
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.mantissa < 0 { "-" } else { "" };
        let abs = self.mantissa.unsigned_abs();
        if self.scale == 0 {
            return write!(f, "{sign}{abs}");
        }
        let div = 10u128.pow(self.scale);
        write!(
            f,
            "{sign}{}.{:0width$}",
            abs / div,
            abs % div,
            width = self.scale as usize
        )
    }
}

/// Fixed 3-decimal formatting with ties to even, e.g. 0.9135 -> "0.914".
pub fn format_3dp(x: f64) -> String {
    match Decimal::from_f64(x) {
        Some(d) => {
            let s = d.round_half_even(3).to_string();
            if s == "-0.000" {
                "0.000".into()
            } else {
                s
            }
        }
        None => format!("{x}"),
    }
}

/// Signed variant for deltas: "+0.012", "-0.300", "0.000".
pub fn format_delta_3dp(x: f64) -> String {
    let s = format_3dp(x);
    if s.starts_with('-') || s == "0.000" {
        s
    } else {
        format!("+{s}")
    }
}

/// Balanced-accuracy cell from printed Real and Fake cells, computed in
/// exact decimal arithmetic and rounded to 3 places, ties to even.
pub fn average_cells(real: &str, fake: &str) -> Result<String, String> {
    let (r, f): (Decimal, Decimal) = (real.parse()?, fake.parse()?);
    Ok(Decimal::mean(r, f).round_half_even(3).to_string())
}
