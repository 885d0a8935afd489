//! Admissible nonlinearity weights k(x).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;

/// Closed-form families of weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KFamily {
    /// `k = 1`.
    Homogeneous,
    /// `k = c`; only used for threshold diagnostics, fails admissibility for `c != 1`.
    Constant { c: f64 },
    /// `k = (1 + k1 (x/a)^2) / (1 + (x/a)^2)`.
    Rational { k1: f64, width: f64 },
}

/// A weight `k(x)` with analytic first and second derivatives.
///
/// `scale` evaluates the family at `scale * x`, which is how `k(lambda y)`
/// enters the rescaled equations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneityProfile {
    pub family: KFamily,
    pub scale: f64,
}

pub const DEFAULT_K1: f64 = 0.5;

impl Default for InhomogeneityProfile {
    fn default() -> Self {
        Self::rational(DEFAULT_K1, 1.0)
    }
}

impl InhomogeneityProfile {
    pub fn homogeneous() -> Self {
        Self { family: KFamily::Homogeneous, scale: 1.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self { family: KFamily::Constant { c }, scale: 1.0 }
    }

    pub fn rational(k1: f64, width: f64) -> Self {
        Self { family: KFamily::Rational { k1, width }, scale: 1.0 }
    }

    /// Parses `default`, `homogeneous` or `custom:k1=0.3,width=2`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "default" => return Ok(Self::default()),
            "homogeneous" => return Ok(Self::homogeneous()),
            _ => {}
        }
        let params = spec
            .strip_prefix("custom:")
            .ok_or_else(|| Error::InvalidArgument(format!("unknown k selection '{spec}'")))?;
        let mut k1 = DEFAULT_K1;
        let mut width = 1.0;
        let mut constant = None;
        for item in params.split(',').filter(|s| !s.is_empty()) {
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("bad k parameter '{item}'")))?;
            let v: f64 = val
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number in '{item}'")))?;
            match key.trim() {
                "k1" => k1 = v,
                "width" | "a" => width = v,
                "c" => constant = Some(v),
                other => return Err(Error::InvalidArgument(format!("unknown k parameter '{other}'"))),
            }
        }
        let k = match constant {
            Some(c) => Self::constant(c),
            None => Self::rational(k1, width),
        };
        k.validate_params()?;
        Ok(k)
    }

    fn validate_params(&self) -> Result<()> {
        match self.family {
            KFamily::Rational { k1, width } if !(k1 > 0.0 && k1 <= 1.0 && width > 0.0) => {
                Err(Error::InvalidArgument(format!("need 0 < k1 <= 1 and width > 0, got k1={k1}, width={width}")))
            }
            KFamily::Constant { c } if c <= 0.0 => Err(Error::InvalidArgument("constant k must be positive".into())),
            _ => Ok(()),
        }
    }

    /// `x -> k(mu x)` composed with the existing scale.
    pub fn rescaled(&self, mu: f64) -> Self {
        Self { family: self.family.clone(), scale: self.scale * mu }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.family, KFamily::Homogeneous)
    }

    pub fn label(&self) -> String {
        match self.family {
            KFamily::Homogeneous => "homogeneous".into(),
            KFamily::Constant { c } => format!("constant(c={c})"),
            KFamily::Rational { k1, width } => format!("rational(k1={k1},width={width})"),
        }
    }

    pub fn k(&self, x: f64) -> f64 {
        let z = self.scale * x;
        match self.family {
            KFamily::Homogeneous => 1.0,
            KFamily::Constant { c } => c,
            KFamily::Rational { k1, width } => {
                let r = (z / width).powi(2);
                (1.0 + k1 * r) / (1.0 + r)
            }
        }
    }

    pub fn dk(&self, x: f64) -> f64 {
        let z = self.scale * x;
        match self.family {
            KFamily::Homogeneous | KFamily::Constant { .. } => 0.0,
            KFamily::Rational { k1, width } => {
                // k = k1 + (1-k1)/(1+r), r = (z/a)^2
                let a2 = width * width;
                let r = z * z / a2;
                -(1.0 - k1) * 2.0 * z / a2 / (1.0 + r).powi(2) * self.scale
            }
        }
    }

    pub fn d2k(&self, x: f64) -> f64 {
        let z = self.scale * x;
        match self.family {
            KFamily::Homogeneous | KFamily::Constant { .. } => 0.0,
            KFamily::Rational { k1, width } => {
                let a2 = width * width;
                let r = z * z / a2;
                (1.0 - k1) * (6.0 * r - 2.0) / a2 / (1.0 + r).powi(3) * self.scale * self.scale
            }
        }
    }

    /// `k''(0)` of the unscaled family.
    pub fn second_derivative_at_zero(&self) -> f64 {
        Self { family: self.family.clone(), scale: 1.0 }.d2k(0.0)
    }

    /// Lower bound `k1`.
    pub fn lower_bound(&self) -> f64 {
        match self.family {
            KFamily::Homogeneous => 1.0,
            KFamily::Constant { c } => c,
            KFamily::Rational { k1, .. } => k1,
        }
    }

    pub fn sample(&self, grid: &SpectralGrid) -> Vec<f64> {
        grid.nodes().into_iter().map(|x| self.k(x)).collect()
    }

    /// Checks `0 < k1 <= k <= 1`, `k(0) = 1`, `k'(0) = 0`, evenness, and
    /// `k''(0) < 0` unless homogeneous.
    pub fn check_admissible(&self, grid: &SpectralGrid) -> Result<()> {
        self.validate_params()?;
        let k1 = self.lower_bound();
        let vals = self.sample(grid);
        for (j, &v) in vals.iter().enumerate() {
            if !(v >= k1 - 1e-14 && v <= 1.0 + 1e-14 && v > 0.0) {
                return Err(Error::InvalidArgument(format!("k out of [k1, 1] at node {j}: {v}")));
            }
            let r = vals[grid.reflect_index(j)];
            if j != 0 && (v - r).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("k not even at node {j}")));
            }
        }
        if (self.k(0.0) - 1.0).abs() > 1e-14 || self.dk(0.0) != 0.0 {
            return Err(Error::InvalidArgument("need k(0) = 1 and k'(0) = 0".into()));
        }
        if !self.is_homogeneous() && self.d2k(0.0) >= 0.0 {
            return Err(Error::InvalidArgument("need k''(0) < 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let k = InhomogeneityProfile::rational(0.3, 1.7).rescaled(0.8);
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
            let h = 1e-5;
            let fd1 = (k.k(x + h) - k.k(x - h)) / (2.0 * h);
            let fd2 = (k.k(x + h) - 2.0 * k.k(x) + k.k(x - h)) / (h * h);
            assert!((fd1 - k.dk(x)).abs() < 1e-8);
            assert!((fd2 - k.d2k(x)).abs() < 1e-4);
        }
    }

    #[test]
    fn default_curvature() {
        let k = InhomogeneityProfile::default();
        assert!((k.second_derivative_at_zero() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(InhomogeneityProfile::parse("default").unwrap(), InhomogeneityProfile::default());
        assert!(InhomogeneityProfile::parse("homogeneous").unwrap().is_homogeneous());
        let k = InhomogeneityProfile::parse("custom:k1=0.25,width=2").unwrap();
        assert_eq!(k.family, KFamily::Rational { k1: 0.25, width: 2.0 });
        assert!(InhomogeneityProfile::parse("custom:k1=2").is_err());
        assert!(InhomogeneityProfile::parse("cubic").is_err());
    }
}
