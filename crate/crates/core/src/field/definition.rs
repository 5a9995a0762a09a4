use std::sync::Arc;

use serde::Deserialize;

use super::expr::{parse_field_expr, Expr};
use super::{DomainSpec, Face, FieldError, FieldZooEntry, MatrixFn, PointFn, ScalarField, VectorFn};
use crate::desing::{CertificateSource, KLCertificate, PsiProfile};
use crate::linalg;
use crate::scalar::{lit, Real};

/// Power-law desingularizing function `coefficient * t^exponent`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnownPsiSpec {
    pub coefficient: f64,
    pub exponent: f64,
    pub rho: Option<f64>,
}

/// User field definition, read from TOML:
///
/// ```toml
/// name = "bowl"
/// dimension = 2
/// box = [[-1.0, 1.0], [-1.0, 1.0]]
/// f = "x^2 + y^2"
/// metric = [["1 + x^2", "0"], ["0", "1"]]   # optional
/// zero_faces = ["x2-"]                      # optional
/// known_exponent = 0.5                      # optional
/// [known_psi]                               # optional
/// coefficient = 1.0
/// exponent = 0.5
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDefinition {
    pub name: String,
    pub dimension: usize,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub f: String,
    pub metric: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub zero_faces: Vec<String>,
    pub known_psi: Option<KnownPsiSpec>,
    pub known_exponent: Option<f64>,
    #[serde(default)]
    pub notes: String,
}

fn parse_face(s: &str, n: usize) -> Result<Face, FieldError> {
    let bad = || FieldError::Definition(format!("zero face '{s}' must look like 'x2-' or 'x1+'"));
    let body = s.strip_prefix('x').ok_or_else(bad)?;
    let (num, sign) = body.split_at(body.len().saturating_sub(1));
    let axis: usize = num.parse().map_err(|_| bad())?;
    if axis == 0 || axis > n {
        return Err(bad());
    }
    match sign {
        "-" => Ok(Face { axis: axis - 1, upper: false }),
        "+" => Ok(Face { axis: axis - 1, upper: true }),
        _ => Err(bad()),
    }
}

fn compile(src: &str, n: usize) -> Result<Expr, FieldError> {
    parse_field_expr(src, n).map_err(|e| FieldError::Expression(format!("'{src}' {e}")))
}

impl FieldDefinition {
    pub fn from_toml(text: &str) -> Result<Self, FieldError> {
        toml::from_str(text).map_err(|e| FieldError::Definition(e.to_string()))
    }

    pub fn into_entry<T: Real>(self) -> Result<FieldZooEntry<T>, FieldError> {
        let n = self.dimension;
        if n == 0 || self.bounds.len() != n {
            return Err(FieldError::Definition(format!(
                "dimension {n} but {} box intervals",
                self.bounds.len()
            )));
        }
        let lo: Vec<T> = self.bounds.iter().map(|b| lit(b[0])).collect();
        let hi: Vec<T> = self.bounds.iter().map(|b| lit(b[1])).collect();
        let faces = self.zero_faces.iter().map(|s| parse_face(s, n)).collect::<Result<Vec<_>, _>>()?;
        let domain = DomainSpec::with_zero_faces(&lo, &hi, &faces)?;

        let fx = Arc::new(compile(&self.f, n)?);
        let dfx = Arc::new(fx.gradient(n));
        let metric = match &self.metric {
            None => None,
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(FieldError::Definition(format!("metric must be {n}x{n}")));
                }
                let entries =
                    rows.iter().flatten().map(|s| compile(s, n)).collect::<Result<Vec<_>, _>>()?;
                Some(Arc::new(entries))
            }
        };

        let f1 = Arc::clone(&fx);
        let f: PointFn<T> = Arc::new(move |x: &[T]| f1.eval(x));
        let f2 = Arc::clone(&fx);
        let m2 = metric.clone();
        let grad: VectorFn<T> = Arc::new(move |x: &[T]| {
            let mut d: Vec<T> = dfx.iter().map(|e| e.eval(x)).collect();
            if d.iter().any(|v| !v.is_finite()) && f2.eval::<T>(x) <= T::zero() {
                d = vec![T::zero(); x.len()];
            }
            match &m2 {
                Some(m) => {
                    let g: Vec<T> = m.iter().map(|e| e.eval(x)).collect();
                    match linalg::cholesky(&g, x.len()) {
                        Some(l) => linalg::cholesky_solve(&l, &d),
                        None => vec![T::nan(); x.len()],
                    }
                }
                None => d,
            }
        });
        let mut field = ScalarField::new(self.name.clone(), domain, f, grad);
        if let Some(m) = metric {
            let g: MatrixFn<T> = Arc::new(move |x: &[T]| m.iter().map(|e| e.eval(x)).collect());
            field = field.with_metric(g);
        }
        let known_certificate = match &self.known_psi {
            None => None,
            Some(spec) => {
                let psi = PsiProfile::power_law(lit(spec.coefficient), lit(spec.exponent))
                    .map_err(|e| FieldError::Definition(e.to_string()))?;
                let rho = match spec.rho {
                    Some(r) => lit(r),
                    None => super::estimate_max_on_box(&field, if n <= 2 { 81 } else { 9 }) * lit(2.0),
                };
                let rho = if rho > T::zero() { rho } else { T::one() };
                Some(
                    KLCertificate::new(rho, field.domain().bounds().clone(), psi, CertificateSource::User)
                        .map_err(|e| FieldError::Definition(e.to_string()))?,
                )
            }
        };
        Ok(FieldZooEntry {
            name: self.name,
            field,
            known_certificate,
            known_exponent: self.known_exponent.map(lit),
            notes: self.notes,
        })
    }
}

/// Parses a TOML field definition into a zoo entry.
pub fn load_definition<T: Real>(text: &str) -> Result<FieldZooEntry<T>, FieldError> {
    FieldDefinition::from_toml(text)?.into_entry()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_round_trip() {
        let text = r#"
name = "bowl"
dimension = 2
box = [[-1.0, 1.0], [-1.0, 1.0]]
f = "x^2 + 3*y^2"
metric = [["2", "0"], ["0", "1 + x^2"]]
[known_psi]
coefficient = 1.0
exponent = 0.5
"#;
        let e: FieldZooEntry<f64> = load_definition(text).unwrap();
        let g = e.field.gradient(&[0.5, 0.5]);
        assert!((g[0] - 0.5).abs() < 1e-15);
        assert!((g[1] - 3.0 / 1.25).abs() < 1e-15);
        assert!(e.known_certificate.is_some());
        e.field.validate(100, 1, 1e-4, 1e-5).unwrap();
    }

    #[test]
    fn errors_report_location() {
        let err = load_definition::<f64>("name = \"x\"\ndimension = 2\nbox = [[0, 1]\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        let err = load_definition::<f64>(
            "name = \"x\"\ndimension = 1\nbox = [[0.0, 1.0]]\nf = \"x1 + q\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, FieldError::Expression(_)));
        let neg = load_definition::<f64>("name = \"n\"\ndimension = 1\nbox = [[-1.0, 1.0]]\nf = \"x1\"\n").unwrap();
        assert!(matches!(neg.field.validate(50, 3, 1e-4, 1e-5), Err(FieldError::NegativeValue { .. })));
    }

    #[test]
    fn faces_parse() {
        assert_eq!(parse_face("x2-", 2).unwrap(), Face { axis: 1, upper: false });
        assert!(parse_face("x3+", 2).is_err());
        assert!(parse_face("y-", 2).is_err());
    }
}
