//! Hexadecimal floating-point text (`0x1.8p+1` style) for bit-exact
//! persistence of `f64` values.

use std::fmt::Write;

/// Formats a finite `f64` as a normalized hexadecimal float.
pub fn format(v: f64) -> String {
    let mut out = String::new();
    write_hex(&mut out, v);
    out
}

pub fn write_hex(out: &mut String, v: f64) {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        out.push('-');
    }
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    assert!(exp != 0x7ff, "hexfloat: non-finite value {v}");
    let (lead, e) = match (exp, mant) {
        (0, 0) => {
            out.push_str("0x0p+0");
            return;
        }
        (0, _) => (0, -1022),
        _ => (1, exp - 1023),
    };
    let mut digits = format!("{mant:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    if digits.is_empty() {
        let _ = write!(out, "0x{lead}p{e:+}");
    } else {
        let _ = write!(out, "0x{lead}.{digits}p{e:+}");
    }
}

/// Parses the output of [`format`].
pub fn parse(s: &str) -> Option<f64> {
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let rest = rest.strip_prefix("0x")?;
    let (mantissa, exp) = rest.split_once('p')?;
    let exp: i64 = exp.parse().ok()?;
    let (lead, frac) = match mantissa.split_once('.') {
        Some((l, f)) => (l, f),
        None => (mantissa, ""),
    };
    if frac.len() > 13 || !frac.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let frac_bits = if frac.is_empty() {
        0
    } else {
        u64::from_str_radix(frac, 16).ok()? << (4 * (13 - frac.len()))
    };
    let bits = match lead {
        "1" => {
            let biased = exp + 1023;
            if !(1..=2046).contains(&biased) {
                return None;
            }
            ((biased as u64) << 52) | frac_bits
        }
        "0" if frac_bits == 0 => 0,
        "0" if exp == -1022 => frac_bits,
        _ => return None,
    };
    let v = f64::from_bits(bits);
    Some(if neg { -v } else { v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(3.0), "0x1.8p+1");
        assert_eq!(format(-0.1), "-0x1.999999999999ap-4");
        assert_eq!(format(0.0), "0x0p+0");
        assert_eq!(format(f64::MIN_POSITIVE / 2.0), "0x0.8p-1022");
        assert_eq!(parse("0x1.8p+1"), Some(3.0));
        assert_eq!(parse("-0x0p+0").map(f64::to_bits), Some((-0.0f64).to_bits()));
        assert_eq!(parse("0x2p+0"), None);
        assert_eq!(parse("1.5"), None);
    }

    proptest! {
        #[test]
        fn round_trips_every_finite_bit_pattern(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            prop_assert_eq!(parse(&format(v)).map(f64::to_bits), Some(bits));
        }
    }
}
