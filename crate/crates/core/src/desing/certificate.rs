//! Desingularizing functions and the `(rho, U, Psi)` certificate they live in.

use serde::Serialize;

use super::DesingError;
use crate::region::BoxRegion;
use crate::scalar::{lit, Real};

/// Strictly increasing profile with `Psi(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiProfile<T> {
    /// `Psi(t) = coefficient * t^exponent`
    PowerLaw { coefficient: T, exponent: T },
    Tabulated(PsiTable<T>),
}

/// Tabulated profile on an ascending positive grid. Values are interpolated by
/// cubic Hermite in `(ln t, ln Psi)`, which reproduces power laws exactly; below
/// the first node the local power law is continued down to `Psi(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable<T> {
    grid: Vec<T>,
    values: Vec<T>,
    derivatives: Vec<T>,
}

impl<T: Real> PsiTable<T> {
    pub fn new(grid: Vec<T>, values: Vec<T>, derivatives: Vec<T>) -> Result<Self, DesingError> {
        if grid.len() < 2 || grid.len() != values.len() || grid.len() != derivatives.len() {
            return Err(DesingError::MalformedPsi("grid, values and derivatives must align (>= 2 nodes)".into()));
        }
        if grid[0] <= T::zero() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DesingError::MalformedPsi("grid must be positive and strictly ascending".into()));
        }
        if values[0] <= T::zero() || values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DesingError::MalformedPsi("values must be positive and strictly increasing".into()));
        }
        if derivatives.iter().any(|d| !(*d > T::zero()) || !d.is_finite()) {
            return Err(DesingError::MalformedPsi("derivative values must be positive and finite".into()));
        }
        Ok(PsiTable { grid, values, derivatives })
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn derivatives(&self) -> &[T] {
        &self.derivatives
    }

    fn eval(&self, t: T) -> (T, T) {
        if t <= T::zero() {
            return (T::zero(), T::infinity());
        }
        let n = self.grid.len();
        let (t0, v0, d0) = (self.grid[0], self.values[0], self.derivatives[0]);
        if t < t0 {
            let q = t0 * d0 / v0;
            let v = v0 * (t / t0).powf(q);
            return (v, q * v / t);
        }
        if t >= self.grid[n - 1] {
            let d = self.derivatives[n - 1];
            return (self.values[n - 1] + d * (t - self.grid[n - 1]), d);
        }
        let i = self.grid.partition_point(|&g| g <= t) - 1;
        let (ta, tb) = (self.grid[i], self.grid[i + 1]);
        let (va, vb) = (self.values[i], self.values[i + 1]);
        let (la, lb) = (ta.ln(), tb.ln());
        let dl = lb - la;
        let ma = ta * self.derivatives[i] / va * dl;
        let mb = tb * self.derivatives[i + 1] / vb * dl;
        let (ya, yb) = (va.ln(), vb.ln());
        let s = (t.ln() - la) / dl;
        let (s2, s3) = (s * s, s * s * s);
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        let y = h00 * ya + h10 * ma + h01 * yb + h11 * mb;
        let six = lit::<T>(6.0);
        let dy = (six * s2 - six * s) * ya
            + (three * s2 - lit::<T>(4.0) * s + T::one()) * ma
            + (six * s - six * s2) * yb
            + (three * s2 - two * s) * mb;
        let v = y.exp();
        (v, v / t * dy / dl)
    }
}

impl<T: Real> PsiProfile<T> {
    pub fn power_law(coefficient: T, exponent: T) -> Result<Self, DesingError> {
        if !(coefficient > T::zero()) || !(exponent > T::zero()) {
            return Err(DesingError::MalformedPsi(format!(
                "power law {coefficient}*t^{exponent} is not strictly increasing from 0"
            )));
        }
        Ok(PsiProfile::PowerLaw { coefficient, exponent })
    }

    pub fn identity() -> Self {
        PsiProfile::PowerLaw { coefficient: T::one(), exponent: T::one() }
    }

    pub fn value(&self, t: T) -> T {
        match self {
            PsiProfile::PowerLaw { coefficient, exponent } => {
                if t <= T::zero() {
                    T::zero()
                } else {
                    *coefficient * t.powf(*exponent)
                }
            }
            PsiProfile::Tabulated(tab) => tab.eval(t).0,
        }
    }

    /// `Psi'(t)` for `t > 0`.
    pub fn derivative(&self, t: T) -> T {
        match self {
            PsiProfile::PowerLaw { coefficient, exponent } => {
                if t <= T::zero() {
                    if *exponent < T::one() {
                        T::infinity()
                    } else if *exponent == T::one() {
                        *coefficient
                    } else {
                        T::zero()
                    }
                } else {
                    *coefficient * *exponent * t.powf(*exponent - T::one())
                }
            }
            PsiProfile::Tabulated(tab) => tab.eval(t).1,
        }
    }

    /// Checks strict monotonicity on `grid` (plus `Psi(0) = 0`).
    pub fn check_monotone_on(&self, grid: &[T]) -> Result<(), DesingError> {
        if self.value(T::zero()) != T::zero() {
            return Err(DesingError::MalformedPsi("Psi(0) must vanish".into()));
        }
        let mut prev = T::zero();
        for &t in grid.iter().filter(|&&t| t > T::zero()) {
            let v = self.value(t);
            if !(v > prev) || !(self.derivative(t) > T::zero()) {
                return Err(DesingError::MalformedPsi(format!("Psi not strictly increasing near t = {t}")));
            }
            prev = v;
        }
        Ok(())
    }

    /// Samples `(t, Psi, Psi')` on a geometric grid below `rho`.
    pub fn table(&self, rho: T, nodes: usize) -> Vec<(T, T, T)> {
        (0..nodes)
            .rev()
            .map(|j| {
                let t = rho * lit::<T>(0.5).powi(j as i32);
                (t, self.value(t), self.derivative(t))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateSource {
    User,
    PowerLawFit,
    BuiltFromA,
}

/// Triple `(rho, U, Psi)`: `|grad(Psi o f)| >= 1` on `U ∩ f^{-1}(0, rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KLCertificate<T> {
    pub rho: T,
    pub region: BoxRegion<T>,
    pub psi: PsiProfile<T>,
    pub source: CertificateSource,
}

impl<T: Real> KLCertificate<T> {
    pub fn new(rho: T, region: BoxRegion<T>, psi: PsiProfile<T>, source: CertificateSource) -> Result<Self, DesingError> {
        if !(rho > T::zero()) {
            return Err(DesingError::MalformedPsi("rho must be positive".into()));
        }
        let probe: Vec<T> = (0..48).rev().map(|j| rho * lit::<T>(0.5).powi(j)).collect();
        psi.check_monotone_on(&probe)?;
        Ok(KLCertificate { rho, region, psi, source })
    }

    /// `g = Psi o f` evaluated at a field value.
    pub fn g(&self, f_value: T) -> T {
        self.psi.value(f_value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_table() -> PsiTable<f64> {
        let grid: Vec<f64> = (0..40).rev().map(|j| 2f64.powi(-j)).collect();
        let values = grid.iter().map(|t| t.sqrt()).collect();
        let der = grid.iter().map(|t| 0.5 / t.sqrt()).collect();
        PsiTable::new(grid, values, der).unwrap()
    }

    #[test]
    fn tabulated_power_law_is_reproduced_between_nodes() {
        let p = PsiProfile::Tabulated(sqrt_table());
        for &t in &[1e-14, 3e-9, 0.0123, 0.3, 0.77] {
            assert!((p.value(t) - f64::sqrt(t)).abs() < 1e-13, "t={t}");
            assert!((p.derivative(t) - 0.5 / f64::sqrt(t)).abs() < 1e-9 / f64::sqrt(t));
        }
        assert_eq!(p.value(0.0), 0.0);
    }

    #[test]
    fn non_monotone_tables_are_rejected() {
        let r = PsiTable::new(vec![0.1, 0.2, 0.3], vec![1.0, 0.9, 1.2], vec![1.0, 1.0, 1.0]);
        assert!(r.is_err());
        assert!(PsiProfile::<f64>::power_law(1.0, -0.5).is_err());
    }
}
