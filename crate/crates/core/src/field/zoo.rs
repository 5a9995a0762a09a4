use std::sync::Arc;

use super::{DomainSpec, Face, FieldError, FieldZooEntry, MatrixFn, PointFn, ProfileFn, ScalarField, VectorFn};
use crate::desing::{CertificateSource, KLCertificate, PsiProfile, PsiTable};
use crate::linalg;
use crate::quad::{self, TailIntegral};
use crate::scalar::{lit, to_f64, Real};

/// Zero locus geometry for distance-power fields.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive<T> {
    Point(Vec<T>),
    /// Sphere of the ambient dimension (a circle in the plane).
    Circle { center: Vec<T>, radius: T },
    Segment { a: Vec<T>, b: Vec<T> },
    /// Closed ball (a disk in the plane).
    Disk { center: Vec<T>, radius: T },
}

impl<T: Real> Primitive<T> {
    fn dim(&self) -> usize {
        match self {
            Primitive::Point(c) => c.len(),
            Primitive::Circle { center, .. } | Primitive::Disk { center, .. } => center.len(),
            Primitive::Segment { a, .. } => a.len(),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Primitive::Point(_) => "point",
            Primitive::Circle { .. } => "circle",
            Primitive::Segment { .. } => "segment",
            Primitive::Disk { .. } => "disk",
        }
    }

    /// Collapses degenerate shapes (zero radius, zero-length segment) to points.
    fn normalized(self) -> Result<Self, FieldError> {
        match self {
            Primitive::Circle { center, radius } | Primitive::Disk { center, radius } if radius == T::zero() => {
                Ok(Primitive::Point(center))
            }
            Primitive::Circle { radius, .. } | Primitive::Disk { radius, .. } if !(radius > T::zero()) => {
                Err(FieldError::InvalidParameter(format!("radius must be nonnegative, got {radius}")))
            }
            Primitive::Segment { a, b } if a.len() != b.len() => {
                Err(FieldError::InvalidParameter("segment endpoints differ in dimension".into()))
            }
            Primitive::Segment { a, b } if a == b => Ok(Primitive::Point(a)),
            other => Ok(other),
        }
    }

    /// Axis-aligned extent of the primitive.
    fn extent(&self) -> (Vec<T>, Vec<T>) {
        match self {
            Primitive::Point(c) => (c.clone(), c.clone()),
            Primitive::Circle { center, radius } | Primitive::Disk { center, radius } => (
                center.iter().map(|&c| c - *radius).collect(),
                center.iter().map(|&c| c + *radius).collect(),
            ),
            Primitive::Segment { a, b } => (
                a.iter().zip(b).map(|(&x, &y)| x.min(y)).collect(),
                a.iter().zip(b).map(|(&x, &y)| x.max(y)).collect(),
            ),
        }
    }

    /// Distance to the primitive and the unit direction pointing away from it.
    pub fn distance_and_direction(&self, x: &[T]) -> (T, Vec<T>) {
        let zero = vec![T::zero(); x.len()];
        let radial = |c: &[T]| {
            let v = linalg::sub(x, c);
            let r = linalg::norm(&v);
            (r, v)
        };
        match self {
            Primitive::Point(c) => {
                let (r, v) = radial(c);
                if r > T::zero() {
                    (r, linalg::scale(&v, r.recip()))
                } else {
                    (r, zero)
                }
            }
            Primitive::Circle { center, radius } => {
                let (r, v) = radial(center);
                if r > T::zero() {
                    let s = if r >= *radius { T::one() } else { -T::one() };
                    ((r - *radius).abs(), linalg::scale(&v, s / r))
                } else {
                    (*radius, zero)
                }
            }
            Primitive::Disk { center, radius } => {
                let (r, v) = radial(center);
                if r > *radius {
                    (r - *radius, linalg::scale(&v, r.recip()))
                } else {
                    (T::zero(), zero)
                }
            }
            Primitive::Segment { a, b } => {
                let ab = linalg::sub(b, a);
                let s = (linalg::dot(&linalg::sub(x, a), &ab) / linalg::dot(&ab, &ab)).max(T::zero()).min(T::one());
                let p = linalg::axpy(a, s, &ab);
                let (d, v) = radial(&p);
                if d > T::zero() {
                    (d, linalg::scale(&v, d.recip()))
                } else {
                    (d, zero)
                }
            }
        }
    }
}

/// Largest value of `f` over a lattice with `per_axis` points per axis.
pub fn estimate_max_on_box<T: Real>(field: &ScalarField<T>, per_axis: usize) -> T {
    field
        .domain()
        .bounds()
        .lattice(per_axis)
        .iter()
        .map(|x| field.value(x))
        .fold(T::zero(), T::max)
}

fn default_rho<T: Real>(field: &ScalarField<T>) -> T {
    let per_axis = match field.dim() {
        1 => 401,
        2 => 81,
        3 => 21,
        _ => 5,
    };
    let m = estimate_max_on_box(field, per_axis);
    if m > T::zero() {
        m * lit(2.0)
    } else {
        T::one()
    }
}

fn certificate<T: Real>(field: &ScalarField<T>, psi: PsiProfile<T>) -> Result<KLCertificate<T>, FieldError> {
    KLCertificate::new(default_rho(field), field.domain().bounds().clone(), psi, CertificateSource::User)
        .map_err(|e| FieldError::InvalidParameter(e.to_string()))
}

/// `d(x, Z)^p` for a geometric primitive `Z`, with `Psi(t) = t^{1/p}` attached.
pub fn make_distance_power_field<T: Real>(
    p: T,
    primitive: Primitive<T>,
    domain: DomainSpec<T>,
) -> Result<FieldZooEntry<T>, FieldError> {
    if !(p > T::zero()) {
        return Err(FieldError::InvalidParameter(format!("exponent p must be positive, got {p}")));
    }
    let requested = primitive.label();
    let primitive = primitive.normalized()?;
    if primitive.dim() != domain.dim() {
        return Err(FieldError::InvalidParameter("primitive and domain dimensions differ".into()));
    }
    let (lo, hi) = primitive.extent();
    let slack = domain.diameter() * lit(1e-12);
    if !(domain.bounds().contains_with_slack(&lo, slack) && domain.bounds().contains_with_slack(&hi, slack)) {
        return Err(FieldError::InvalidParameter(format!("{} does not fit inside the domain box", primitive.label())));
    }
    let shape = Arc::new(primitive.clone());
    let s1 = Arc::clone(&shape);
    let f: PointFn<T> = Arc::new(move |x: &[T]| {
        let (d, _) = s1.distance_and_direction(x);
        if d > T::zero() {
            d.powf(p)
        } else {
            T::zero()
        }
    });
    let s2 = Arc::clone(&shape);
    let grad: VectorFn<T> = Arc::new(move |x: &[T]| {
        let (d, dir) = s2.distance_and_direction(x);
        if d > T::zero() {
            linalg::scale(&dir, p * d.powf(p - T::one()))
        } else {
            vec![T::zero(); x.len()]
        }
    });
    let s3 = Arc::clone(&shape);
    let zero_dist: PointFn<T> = Arc::new(move |x: &[T]| s3.distance_and_direction(x).0);
    let name = format!("distance-{}^{}", primitive.label(), p);
    let mut field = ScalarField::new(name.clone(), domain.zero_locus_distance_fn(zero_dist), f, grad);
    let mut notes = String::new();
    if p <= T::one() {
        field = field.with_flag("C1 only away from Z");
        notes.push_str("continuous but not differentiable at Z. ");
    }
    if requested != primitive.label() {
        notes.push_str(&format!("degenerate {requested} relabeled as {}. ", primitive.label()));
    }
    let psi = PsiProfile::power_law(T::one(), p.recip()).map_err(|e| FieldError::InvalidParameter(e.to_string()))?;
    let cert = certificate(&field, psi)?;
    Ok(FieldZooEntry {
        name,
        field,
        known_certificate: Some(cert),
        known_exponent: Some(T::one() - p.recip()),
        notes: notes.trim_end().to_string(),
    })
}

/// Positive part of `½(x_1² + … + x_k² − x_{k+1}² − … − x_n²)`, with gradient
/// raised through an optional metric and `Psi(t) = sqrt(2t / C)` where `C` is
/// `0.99` times the smallest eigenvalue of `metric⁻¹` on a lattice of the box.
pub fn make_morse_field<T: Real>(
    k: usize,
    domain: DomainSpec<T>,
    metric: Option<MatrixFn<T>>,
) -> Result<FieldZooEntry<T>, FieldError> {
    let n = domain.dim();
    if k > n {
        return Err(FieldError::InvalidParameter(format!("signature index {k} exceeds dimension {n}")));
    }
    let per_axis = match n {
        1 => 1025,
        2 => 65,
        3 => 33,
        _ => ((1e5f64).powf(1.0 / n as f64).floor() as usize).max(2),
    };
    let mut c_lower = T::one();
    if let Some(g) = &metric {
        c_lower = T::infinity();
        for x in domain.bounds().lattice(per_axis) {
            let m = g(&x);
            let inv = linalg::spd_inverse(&m, n).ok_or_else(|| FieldError::MetricNotPositiveDefinite {
                point: x.iter().map(|&v| to_f64(v)).collect(),
            })?;
            let ev = linalg::symmetric_eigenvalues(&inv, n);
            c_lower = c_lower.min(ev[0]);
        }
    }
    let c = c_lower * lit(0.99);
    let half = lit::<T>(0.5);
    let signed = move |x: &[T]| -> T {
        x.iter().enumerate().map(|(i, &v)| if i < k { v * v } else { -v * v }).sum::<T>() * half
    };
    let f: PointFn<T> = Arc::new(move |x: &[T]| signed(x).max(T::zero()));
    let jx = move |x: &[T]| -> Vec<T> { x.iter().enumerate().map(|(i, &v)| if i < k { v } else { -v }).collect() };
    let g2 = metric.clone();
    let grad: VectorFn<T> = Arc::new(move |x: &[T]| {
        if signed(x) <= T::zero() {
            return vec![T::zero(); x.len()];
        }
        let d = jx(x);
        match &g2 {
            Some(g) => match linalg::cholesky(&g(x), x.len()) {
                Some(l) => linalg::cholesky_solve(&l, &d),
                None => vec![T::nan(); x.len()],
            },
            None => d,
        }
    });
    let name = format!("morse-{k}-{}", n - k);
    let mut field = ScalarField::new(name.clone(), domain, f, grad);
    match metric {
        Some(g) => field = field.with_metric(g),
        None => {
            let hess: MatrixFn<T> = Arc::new(move |x: &[T]| {
                let n = x.len();
                let mut h = vec![T::zero(); n * n];
                if signed(x) > T::zero() {
                    for i in 0..n {
                        h[i * n + i] = if i < k { T::one() } else { -T::one() };
                    }
                }
                h
            });
            field = field.with_hessian(hess);
        }
    }
    let psi = PsiProfile::power_law((lit::<T>(2.0) / c).sqrt(), half)
        .map_err(|e| FieldError::InvalidParameter(e.to_string()))?;
    let cert = certificate(&field, psi)?;
    Ok(FieldZooEntry {
        name,
        field,
        known_certificate: Some(cert),
        known_exponent: Some(half),
        notes: format!("spectral constant C = {c}"),
    })
}

const RADIAL_NODES: usize = 4096;

/// Radial profile `F` with `F' = sqrt(b(F))`, `F(0) = 0`, obtained by inverting
/// `r(F) = ∫_0^F b^{-1/2}` on a uniform radial grid.
struct RadialProfile<T> {
    r_max: T,
    values: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> RadialProfile<T> {
    fn eval(&self, r: T) -> T {
        let h = self.r_max / lit(RADIAL_NODES as f64);
        if r >= self.r_max {
            let n = RADIAL_NODES;
            return self.values[n] + self.slopes[n] * (r - self.r_max);
        }
        let u = (r / h).max(T::zero());
        let i = u.floor().to_usize().unwrap_or(0).min(RADIAL_NODES - 1);
        let s = u - lit(i as f64);
        let (s2, s3) = (s * s, s * s * s);
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        (two * s3 - three * s2 + T::one()) * self.values[i]
            + (s3 - two * s2 + s) * h * self.slopes[i]
            + (three * s2 - two * s3) * self.values[i + 1]
            + (s3 - s2) * h * self.slopes[i + 1]
    }
}

fn tail_integral<T: Real>(w: &impl Fn(T) -> T, t: T) -> Result<T, FieldError> {
    match quad::integrate_to_zero(w, t, lit(1e-15)) {
        TailIntegral::Converged(v) if v.is_finite() => Ok(v),
        _ => Err(FieldError::InvalidParameter("b^(-1/2) is not integrable at 0; no profile with F(0) = 0".into())),
    }
}

fn build_radial<T: Real>(b: &ProfileFn<T>, r_max: T) -> Result<(RadialProfile<T>, T), FieldError> {
    let w = |t: T| b(t).sqrt().recip();
    let mut f_max = T::one();
    let mut reached = false;
    for _ in 0..200 {
        if tail_integral(&w, f_max)? >= r_max {
            reached = true;
            break;
        }
        f_max = f_max * lit(2.0);
    }
    if !reached {
        return Err(FieldError::InvalidParameter("radius of the domain is never reached by the profile".into()));
    }
    for j in 0..=4000 {
        let t = if j <= 2000 {
            f_max * lit::<T>(10.0).powf(lit::<T>(-12.0 * (2000 - j) as f64 / 2000.0))
        } else {
            f_max * lit((j - 2000) as f64 / 2000.0)
        };
        let v = b(t);
        if t > T::zero() && !(v > T::zero() && v.is_finite()) {
            return Err(FieldError::InvalidParameter(format!("b({t}) = {v} is not positive")));
        }
    }
    let h = r_max / lit(RADIAL_NODES as f64);
    let mut values = vec![T::zero(); RADIAL_NODES + 1];
    // first node from the singular integral, by bisection
    let (mut lo, mut hi) = (T::zero(), f_max);
    for _ in 0..200 {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if tail_integral(&w, mid)? < h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    values[1] = (lo + hi) * lit(0.5);
    let tol = lit::<T>(1e-16);
    for i in 2..=RADIAL_NODES {
        let start = values[i - 1];
        let (mut lo, mut hi) = (start, f_max);
        let mut x = (start + h * b(start).sqrt()).min(f_max);
        for _ in 0..100 {
            let g = quad::adaptive(&w, start, x, tol, tol) - h;
            if g < T::zero() {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - g / w(x);
            if !(next > lo && next < hi) {
                next = (lo + hi) * lit(0.5);
            }
            let done = (next - x).abs() <= x * lit(1e-15);
            x = next;
            if done {
                break;
            }
        }
        values[i] = x;
    }
    let slopes = values.iter().map(|&v| b(v).max(T::zero()).sqrt()).collect();
    Ok((RadialProfile { r_max, values, slopes }, f_max))
}

/// Radial field `F(|x|)` satisfying `|∇f|² = b(f)`, with `Psi(t) = ∫_0^t b^{-1/2}`.
pub fn make_transnormal_field<T: Real>(b: ProfileFn<T>, domain: DomainSpec<T>) -> Result<FieldZooEntry<T>, FieldError> {
    let r_max = domain
        .bounds()
        .lo()
        .iter()
        .zip(domain.bounds().hi())
        .map(|(&l, h)| l.abs().max(h.abs()).powi(2))
        .sum::<T>()
        .sqrt()
        * lit(1.01);
    let (profile, f_max) = build_radial(&b, r_max)?;
    let profile = Arc::new(profile);
    let p1 = Arc::clone(&profile);
    let f: PointFn<T> = Arc::new(move |x: &[T]| p1.eval(linalg::norm(x)));
    let p2 = Arc::clone(&profile);
    let b2 = Arc::clone(&b);
    let grad: VectorFn<T> = Arc::new(move |x: &[T]| {
        let r = linalg::norm(x);
        if r > T::zero() {
            let speed = b2(p2.eval(r)).max(T::zero()).sqrt();
            linalg::scale(x, speed / r)
        } else {
            vec![T::zero(); x.len()]
        }
    });
    let field = ScalarField::new("transnormal", domain, f, grad);

    let w = |t: T| b(t).sqrt().recip();
    let nodes = 240;
    let grid: Vec<T> = (0..=nodes).rev().map(|j| f_max * lit::<T>(2.0).powf(lit(-(j as f64) / 4.0))).collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut acc = tail_integral(&w, grid[0])?;
    values.push(acc);
    for pair in grid.windows(2) {
        acc = acc + quad::adaptive(&w, pair[0], pair[1], lit(1e-300), lit(1e-14));
        values.push(acc);
    }
    let derivatives = grid.iter().map(|&t| w(t)).collect();
    let table = PsiTable::new(grid, values, derivatives).map_err(|e| FieldError::InvalidParameter(e.to_string()))?;
    let cert = certificate(&field, PsiProfile::Tabulated(table))?;
    Ok(FieldZooEntry {
        name: "transnormal".into(),
        field,
        known_certificate: Some(cert),
        known_exponent: None,
        notes: "radial solution of F' = sqrt(b(F)), F(0) = 0".into(),
    })
}

/// `psi ∘ f` with gradient `psi'(f) ∇f`.
pub fn compose_with_psi<T: Real>(field: &ScalarField<T>, psi: PsiProfile<T>) -> Result<ScalarField<T>, FieldError> {
    let top = default_rho(field);
    let probe: Vec<T> = (0..80).rev().map(|j| top * lit::<T>(0.5).powi(j)).collect();
    psi.check_monotone_on(&probe).map_err(|e| FieldError::InvalidParameter(e.to_string()))?;
    let psi = Arc::new(psi);
    let (inner_f, inner_g) = (field.clone(), field.clone());
    let p1 = Arc::clone(&psi);
    let f: PointFn<T> = Arc::new(move |x: &[T]| p1.value(inner_f.value(x)));
    let grad: VectorFn<T> = Arc::new(move |x: &[T]| {
        let v = inner_g.value(x);
        if v > T::zero() {
            linalg::scale(&inner_g.gradient(x), psi.derivative(v))
        } else {
            vec![T::zero(); x.len()]
        }
    });
    let mut out = ScalarField::new(format!("psi({})", field.name()), field.domain().clone(), f, grad);
    if let Some(g) = field.metric.clone() {
        out = out.with_metric(g);
    }
    Ok(out)
}

fn square_box<T: Real>(n: usize, half: f64) -> DomainSpec<T> {
    DomainSpec::new(&vec![lit(-half); n], &vec![lit(half); n]).expect("valid box")
}

/// Names of the built-in example fields.
pub fn zoo_names() -> &'static [&'static str] {
    &[
        "quadratic",
        "disk",
        "distance",
        "quartic",
        "strip",
        "circle",
        "saddle",
        "morse-min",
        "morse-metric",
        "transnormal",
        "product",
        "ball3",
    ]
}

/// Built-in example field by name.
pub fn zoo_entry<T: Real>(name: &str) -> Result<FieldZooEntry<T>, FieldError> {
    let origin2 = vec![T::zero(); 2];
    let named = |e: FieldZooEntry<T>, note: &str| -> FieldZooEntry<T> {
        let mut e = e;
        e.name = name.to_string();
        e.field = e.field.renamed(name);
        if !note.is_empty() {
            e.notes = if e.notes.is_empty() { note.to_string() } else { format!("{note}. {}", e.notes) };
        }
        e
    };
    let entry = match name {
        "quadratic" => named(
            make_distance_power_field(lit(2.0), Primitive::Point(origin2), square_box(2, 2.0))?,
            "|x|^2",
        ),
        "disk" => named(
            make_distance_power_field(
                lit(2.0),
                Primitive::Disk { center: origin2, radius: T::one() },
                square_box(2, 3.0),
            )?,
            "max(|x| - 1, 0)^2",
        ),
        "distance" => named(make_distance_power_field(T::one(), Primitive::Point(origin2), square_box(2, 2.0))?, "|x|"),
        "quartic" => named(
            make_distance_power_field(lit(4.0), Primitive::Point(origin2), square_box(2, 1.5))?,
            "|x|^4",
        ),
        "strip" => {
            let domain = DomainSpec::with_zero_faces(
                &[lit(-4.0), T::zero()],
                &[lit(4.0), lit(2.0)],
                &[Face { axis: 1, upper: false }],
            )?;
            let seg = Primitive::Segment { a: vec![lit(-4.0), T::zero()], b: vec![lit(4.0), T::zero()] };
            named(make_distance_power_field(lit(2.0), seg, domain)?, "y^2 on the half strip, Z = bottom edge")
        }
        "circle" => named(
            make_distance_power_field(
                lit(2.0),
                Primitive::Circle { center: origin2, radius: T::one() },
                square_box(2, 2.5),
            )?,
            "(|x| - 1)^2",
        ),
        "saddle" => named(make_morse_field(1, square_box(2, 1.0), None)?, "positive part of (x^2 - y^2)/2"),
        "morse-min" => named(make_morse_field(2, square_box(2, 1.0), None)?, "|x|^2 / 2"),
        "morse-metric" => {
            let g: MatrixFn<T> = Arc::new(|x: &[T]| {
                vec![T::one() + x[0] * x[0], T::zero(), T::zero(), T::one() + x[1] * x[1]]
            });
            named(make_morse_field(1, square_box(2, 1.0), Some(g))?, "saddle with metric diag(1 + x1^2, 1 + x2^2)")
        }
        "transnormal" => {
            let b: ProfileFn<T> = Arc::new(|t: T| lit::<T>(4.0) * t);
            let mut e = named(make_transnormal_field(b, square_box(2, 1.5))?, "b(t) = 4t, so f = |x|^2");
            e.known_exponent = Some(lit(0.5));
            e
        }
        "product" => {
            let f: PointFn<T> = Arc::new(|x: &[T]| x[0] * x[0] * x[1].exp());
            let grad: VectorFn<T> = Arc::new(|x: &[T]| {
                let e = x[1].exp();
                vec![lit::<T>(2.0) * x[0] * e, x[0] * x[0] * e]
            });
            let field = ScalarField::new(name, square_box(2, 1.0), f, grad);
            let psi = PsiProfile::power_law(T::E().sqrt(), lit(0.5))
                .map_err(|e| FieldError::InvalidParameter(e.to_string()))?;
            let cert = certificate(&field, psi)?;
            FieldZooEntry {
                name: name.into(),
                field,
                known_certificate: Some(cert),
                known_exponent: Some(lit(0.5)),
                notes: "x1^2 exp(x2)".into(),
            }
        }
        "ball3" => named(
            make_distance_power_field(
                lit(2.0),
                Primitive::Disk { center: vec![T::zero(); 3], radius: T::one() },
                square_box(3, 3.0),
            )?,
            "max(|x| - 1, 0)^2 in three dimensions",
        ),
        other => return Err(FieldError::UnknownField(other.to_string())),
    };
    Ok(entry)
}

/// Every built-in example field.
pub fn zoo<T: Real>() -> Vec<FieldZooEntry<T>> {
    zoo_names().iter().map(|n| zoo_entry(n).expect("built-in field")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_field_examples() {
        let e = make_distance_power_field(1.0f64, Primitive::Point(vec![0.0, 0.0]), square_box(2, 5.0)).unwrap();
        assert_eq!(e.field.value(&[3.0, 4.0]), 5.0);
        let g = e.field.gradient(&[3.0, 4.0]);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        assert!(e.field.flags().iter().any(|f| f.contains("C1")));

        let disk = zoo_entry::<f64>("disk").unwrap();
        assert_eq!(disk.field.value(&[2.0, 0.0]), 1.0);
        assert_eq!(disk.field.gradient(&[2.0, 0.0]), vec![2.0, 0.0]);
        assert_eq!(disk.field.value(&[0.3, 0.2]), 0.0);
        assert_eq!(disk.field.gradient(&[0.3, 0.2]), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_radius_circle_is_relabeled() {
        let e = make_distance_power_field(
            2.0,
            Primitive::Circle { center: vec![0.0, 0.0], radius: 0.0 },
            square_box(2, 1.0),
        )
        .unwrap();
        assert!(e.notes.contains("relabeled"));
        assert!(make_distance_power_field(2.0, Primitive::Point(vec![3.0, 0.0]), square_box(2, 1.0)).is_err());
    }

    #[test]
    fn morse_examples() {
        let e = zoo_entry::<f64>("saddle").unwrap();
        assert_eq!(e.field.value(&[1.0, 0.0]), 0.5);
        assert!((e.field.grad_norm(&[1.0, 0.0]).powi(2) - 1.0).abs() < 1e-15);
        assert_eq!(e.field.value(&[0.0, 1.0]), 0.0);
        let bad: MatrixFn<f64> = Arc::new(|x: &[f64]| vec![x[0], 0.0, 0.0, 1.0]);
        match make_morse_field(1, square_box(2, 1.0), Some(bad)) {
            Err(FieldError::MetricNotPositiveDefinite { point }) => assert!(point[0] <= 0.0),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn transnormal_profiles() {
        let e = zoo_entry::<f64>("transnormal").unwrap();
        for x in [[0.3, 0.4], [1.0, -0.2], [0.01, 0.0]] {
            let r2 = x[0] * x[0] + x[1] * x[1];
            assert!((e.field.value(&x) - r2).abs() < 1e-10 * (1.0 + r2));
        }
        let unit: ProfileFn<f64> = Arc::new(|_| 1.0);
        let d = make_transnormal_field(unit, square_box(2, 1.0)).unwrap();
        assert!((d.field.value(&[0.6, 0.8]) - 1.0).abs() < 1e-10);
        let neg: ProfileFn<f64> = Arc::new(|t| t * (0.5 - t));
        assert!(make_transnormal_field(neg, square_box(2, 1.0)).is_err());
    }

    #[test]
    fn composition_examples() {
        let q = zoo_entry::<f64>("quadratic").unwrap().field;
        let same = compose_with_psi(&q, PsiProfile::identity()).unwrap();
        assert_eq!(same.value(&[0.3, 0.4]), q.value(&[0.3, 0.4]));
        let dist = compose_with_psi(&q, PsiProfile::power_law(1.0, 0.5).unwrap()).unwrap();
        assert!((dist.grad_norm(&[0.3, -1.1]) - 1.0).abs() < 1e-12);
        let d = zoo_entry::<f64>("distance").unwrap().field;
        let sq = compose_with_psi(&d, PsiProfile::power_law(1.0, 2.0).unwrap()).unwrap();
        let g = sq.gradient(&[0.3, -1.1]);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] + 2.2).abs() < 1e-12);
    }
}
