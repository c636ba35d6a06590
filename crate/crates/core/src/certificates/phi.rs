use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concave nondecreasing set-function profile with `phi(0) = 0`, applied to `m(A)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Phi {
    /// `phi(t) = c t`
    Linear { c: f64 },
    /// `phi(t) = b (M t / a)^{1/p}`
    Power {
        b: f64,
        #[serde(rename = "M")]
        m: f64,
        a: f64,
        p: f64,
    },
    /// Piecewise-linear through `(t, phi(t))` points, constant after the last one.
    Table { points: Vec<[f64; 2]> },
    /// `factor * inner(t)`
    Scaled { factor: f64, inner: Box<Phi> },
}

impl Phi {
    pub fn linear(c: f64) -> Self {
        Phi::Linear { c }
    }

    pub fn power(b: f64, m: f64, a: f64, p: f64) -> Self {
        Phi::Power { b, m, a, p }
    }

    /// `(M t)^{1/p}`
    pub fn harnack(m: f64, p: f64) -> Self {
        Phi::Power { b: 1.0, m, a: 1.0, p }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::NonConcavePhi(msg));
        match self {
            Phi::Linear { c } => {
                if !(c.is_finite() && *c >= 0.0) {
                    return bad(format!("linear slope {c} must be finite and nonnegative"));
                }
            }
            Phi::Power { b, m, a, p } => {
                if !(*p > 1.0 && p.is_finite()) {
                    return bad(format!("power exponent p = {p} must exceed 1"));
                }
                if !(*b >= 0.0 && *m >= 0.0 && *a > 0.0 && b.is_finite() && m.is_finite() && a.is_finite()) {
                    return bad(format!("power parameters b={b}, M={m}, a={a} must be finite with b, M >= 0 and a > 0"));
                }
            }
            Phi::Table { points } => {
                let pts = table_points(points);
                if pts.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                    return bad("table entries must be finite".into());
                }
                if pts[0] != [0.0, 0.0] {
                    return bad("table must start at (0, 0)".into());
                }
                let mut last_slope = f64::INFINITY;
                for w in pts.windows(2) {
                    let dt = w[1][0] - w[0][0];
                    if dt <= 0.0 {
                        return bad("table abscissae must be strictly increasing".into());
                    }
                    let slope = (w[1][1] - w[0][1]) / dt;
                    if slope < -1e-12 {
                        return bad(format!("table decreases after t = {}", w[0][0]));
                    }
                    if slope > last_slope * (1.0 + 1e-12) + 1e-12 {
                        return bad(format!("table slope increases at t = {}", w[0][0]));
                    }
                    last_slope = slope;
                }
            }
            Phi::Scaled { factor, inner } => {
                if !(factor.is_finite() && *factor >= 0.0) {
                    return bad(format!("scale factor {factor} must be finite and nonnegative"));
                }
                inner.validate()?;
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            Phi::Linear { c } => c * t,
            Phi::Power { b, m, a, p } => {
                if t == 0.0 || *m == 0.0 {
                    0.0
                } else {
                    b * (m * t / a).powf(1.0 / p)
                }
            }
            Phi::Table { points } => {
                let pts = table_points(points);
                for w in pts.windows(2) {
                    if t <= w[1][0] {
                        let s = (t - w[0][0]) / (w[1][0] - w[0][0]);
                        return w[0][1] + s * (w[1][1] - w[0][1]);
                    }
                }
                pts[pts.len() - 1][1]
            }
            Phi::Scaled { factor, inner } => factor * inner.eval(t),
        }
    }

    /// Smallest `t` with `phi(t) = y`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::OutsidePhiRange(y));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        match self {
            Phi::Linear { c } => {
                if *c > 0.0 {
                    Ok(y / c)
                } else {
                    Err(Error::OutsidePhiRange(y))
                }
            }
            Phi::Power { b, m, a, p } => {
                if *b > 0.0 && *m > 0.0 {
                    Ok(a / m * (y / b).powf(*p))
                } else {
                    Err(Error::OutsidePhiRange(y))
                }
            }
            Phi::Table { points } => {
                let pts = table_points(points);
                for w in pts.windows(2) {
                    if y <= w[1][1] && w[1][1] > w[0][1] {
                        let s = (y - w[0][1]) / (w[1][1] - w[0][1]);
                        return Ok(w[0][0] + s.max(0.0) * (w[1][0] - w[0][0]));
                    }
                }
                Err(Error::OutsidePhiRange(y))
            }
            Phi::Scaled { factor, inner } => {
                if *factor > 0.0 {
                    inner.inverse(y / factor)
                } else {
                    Err(Error::OutsidePhiRange(y))
                }
            }
        }
    }

    /// Slope when `phi` is linear.
    pub fn linear_coefficient(&self) -> Option<f64> {
        match self {
            Phi::Linear { c } => Some(*c),
            Phi::Scaled { factor, inner } => inner.linear_coefficient().map(|c| c * factor),
            _ => None,
        }
    }

    /// `factor * phi`
    pub fn scale(&self, factor: f64) -> Phi {
        match self {
            Phi::Linear { c } => Phi::Linear { c: c * factor },
            Phi::Power { b, m, a, p } => Phi::Power { b: b * factor, m: *m, a: *a, p: *p },
            other => Phi::Scaled { factor, inner: Box::new(other.clone()) },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Phi::Linear { c } => format!("{c} t"),
            Phi::Power { b, m, a, p } => format!("{b} ({m} t / {a})^(1/{p})"),
            Phi::Table { points } => format!("table with {} points", points.len()),
            Phi::Scaled { factor, inner } => format!("{factor} * [{}]", inner.describe()),
        }
    }
}

fn table_points(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(points.len() + 1);
    if points.first().is_none_or(|p| p[0] > 0.0) {
        pts.push([0.0, 0.0]);
    }
    pts.extend_from_slice(points);
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_evaluate() {
        assert_eq!(Phi::linear(3.0).eval(0.5), 1.5);
        let sqrt = Phi::power(1.0, 1.0, 1.0, 2.0);
        assert!((sqrt.eval(0.64) - 0.8).abs() < 1e-15);
        assert!((sqrt.inverse(1.0).unwrap() - 1.0).abs() < 1e-15);
        let t = Phi::Table { points: vec![[1.0, 2.0], [2.0, 2.5]] };
        t.validate().unwrap();
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(1.5), 2.25);
        assert_eq!(t.eval(9.0), 2.5);
        assert_eq!(t.inverse(2.25).unwrap(), 1.5);
        assert!(t.inverse(3.0).is_err());
    }

    #[test]
    fn rejects_non_concave() {
        assert!(Phi::Table { points: vec![[1.0, 1.0], [2.0, 3.0]] }.validate().is_err());
        assert!(Phi::Table { points: vec![[1.0, 1.0], [2.0, 0.5]] }.validate().is_err());
        assert!(Phi::power(1.0, 1.0, 1.0, 0.5).validate().is_err());
        assert!(Phi::linear(-1.0).validate().is_err());
    }

    #[test]
    fn scaling_and_json() {
        let p = Phi::harnack(4.0, 2.0).scale(0.5);
        assert!((p.eval(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(Phi::linear(2.0).scale(0.5).linear_coefficient(), Some(1.0));
        let json = serde_json::to_value(Phi::power(1.0, 2.0, 0.5, 3.0)).unwrap();
        assert_eq!(json["family"], "power");
        assert_eq!(json["M"], 2.0);
        let back: Phi = serde_json::from_value(json).unwrap();
        assert_eq!(back, Phi::power(1.0, 2.0, 0.5, 3.0));
    }
}
