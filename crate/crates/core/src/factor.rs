//! Exact channel factors.

use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serializer};

use crate::error::{Result, WhtError};

/// Exact rational channel factor, e.g. `6` or `1/6`.
pub type Factor = Ratio<usize>;

pub fn parse_factor(s: &str) -> Result<Factor> {
    let f = Factor::from_str(s.trim()).map_err(|_| WhtError::InvalidFactor(s.to_string()))?;
    if *f.numer() == 0 {
        return Err(WhtError::InvalidFactor(s.to_string()));
    }
    Ok(f)
}

/// `n * f` when it is a whole number.
pub fn scale_exact(n: usize, f: Factor) -> Result<usize> {
    let v = Factor::from_integer(n) * f;
    if !v.is_integer() || v.to_integer() == 0 {
        return Err(WhtError::InvalidFactor(format!("{n} * {f} is not a positive integer")));
    }
    Ok(v.to_integer())
}

/// Serde adapter writing factors as strings (`"6"`, `"1/6"`) and accepting
/// either strings or plain integers.
pub mod serde_factor {
    use super::*;

    pub fn serialize<Sr: Serializer>(f: &Factor, s: Sr) -> std::result::Result<Sr::Ok, Sr::Error> {
        s.serialize_str(&f.to_string())
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(usize),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Factor, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(0) => Err(serde::de::Error::custom("factor must be positive")),
            Raw::Int(n) => Ok(Factor::from_integer(n)),
            Raw::Str(s) => parse_factor(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_scale() {
        assert_eq!(parse_factor("6").unwrap(), Factor::from_integer(6));
        assert_eq!(parse_factor("1/6").unwrap(), Factor::new(1, 6));
        assert!(parse_factor("0").is_err());
        assert!(parse_factor("x").is_err());
        assert_eq!(scale_exact(960, Factor::new(1, 6)).unwrap(), 160);
        assert_eq!(scale_exact(12, Factor::new(3, 2)).unwrap(), 18);
        assert!(scale_exact(7, Factor::new(1, 2)).is_err());
    }
}
