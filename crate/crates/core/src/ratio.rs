//! Exact rationals for confidences and thresholds.

use num_rational::Ratio;

pub type Rational = Ratio<u64>;

/// Parses `0.9`, `1`, `.25` or `9/10` into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().ok()?;
        let d: u64 = d.trim().parse().ok()?;
        return (d != 0).then(|| Rational::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 18 {
        return None;
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let scale = 10u64.pow(frac.len() as u32);
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Rational::new(int.checked_mul(scale)?.checked_add(frac)?, scale))
}

/// Renders with a fixed number of decimals, rounding half up.
pub fn to_fixed(r: Rational, places: u32) -> String {
    let scale = 10u128.pow(places);
    let (n, d) = (*r.numer() as u128, *r.denom() as u128);
    let scaled = (2 * n * scale + d) / (2 * d);
    let int = scaled / scale;
    let frac = scaled % scale;
    if places == 0 {
        int.to_string()
    } else {
        format!("{int}.{frac:0width$}", width = places as usize)
    }
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
