//! Nonnegative scalar fields with analytic gradients over boxed domains.
//!
//! A [`ScalarField`] bundles `f`, its (Riemannian) gradient and an optional
//! metric. All evaluators are `Send + Sync` closures so fields can be shared
//! across worker threads. Norms of gradients and tangent vectors are taken in
//! the metric when one is present.

mod definition;
pub mod expr;
mod zoo;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::desing::KLCertificate;
use crate::linalg;
use crate::region::BoxRegion;
use crate::scalar::{lit, Real};

pub use definition::{load_definition, FieldDefinition, KnownPsiSpec};
pub use zoo::{
    compose_with_psi, estimate_max_on_box, make_distance_power_field, make_morse_field,
    make_transnormal_field, zoo, zoo_entry, zoo_names, Primitive,
};

pub type PointFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type VectorFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
/// Row-major `n*n` matrix-valued evaluator.
pub type MatrixFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
pub type ProfileFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("f is negative ({value}) at {point:?}")]
    NegativeValue { point: Vec<f64>, value: f64 },
    #[error("metric is not positive-definite at {point:?}")]
    MetricNotPositiveDefinite { point: Vec<f64> },
    #[error("gradient disagrees with finite differences at {point:?} (relative error {rel_err:.3e})")]
    GradientMismatch { point: Vec<f64>, rel_err: f64 },
    #[error("expression error: {0}")]
    Expression(String),
    #[error("field definition: {0}")]
    Definition(String),
    #[error("unknown zoo field '{0}'")]
    UnknownField(String),
}

/// Box face, used to mark sides of the box that belong to the zero locus
/// rather than to the frontier of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

/// Boxed domain with a distance-to-frontier function.
#[derive(Clone)]
pub struct DomainSpec<T> {
    bounds: BoxRegion<T>,
    boundary_distance: PointFn<T>,
    zero_locus_distance: Option<PointFn<T>>,
}

impl<T: Real> std::fmt::Debug for DomainSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainSpec").field("bounds", &self.bounds).finish_non_exhaustive()
    }
}

impl<T: Real> DomainSpec<T> {
    /// Box `[lo, hi]` whose frontier is the whole box boundary.
    pub fn new(lo: &[T], hi: &[T]) -> Result<Self, FieldError> {
        Self::with_zero_faces(lo, hi, &[])
    }

    /// Box whose listed faces belong to the zero locus; `d(x, ∂M)` ignores them.
    pub fn with_zero_faces(lo: &[T], hi: &[T], zero_faces: &[Face]) -> Result<Self, FieldError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(FieldError::InvalidDomain("bounds must be nonempty and of equal length".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return Err(FieldError::InvalidDomain("box must satisfy lo < hi on every axis".into()));
        }
        if let Some(face) = zero_faces.iter().find(|f| f.axis >= lo.len()) {
            return Err(FieldError::InvalidDomain(format!("face axis {} out of range", face.axis)));
        }
        let (lo_v, hi_v) = (lo.to_vec(), hi.to_vec());
        let faces = zero_faces.to_vec();
        let boundary_distance: PointFn<T> = Arc::new(move |x: &[T]| {
            let mut d = T::infinity();
            for (i, &xi) in x.iter().enumerate() {
                let lo_open = faces.iter().any(|f| f.axis == i && !f.upper);
                let hi_open = faces.iter().any(|f| f.axis == i && f.upper);
                if !lo_open {
                    d = d.min(xi - lo_v[i]);
                }
                if !hi_open {
                    d = d.min(hi_v[i] - xi);
                }
            }
            d.max(T::zero())
        });
        Ok(DomainSpec { bounds: BoxRegion::from_bounds(lo, hi), boundary_distance, zero_locus_distance: None })
    }

    pub fn boundary_distance_fn(mut self, d: PointFn<T>) -> Self {
        self.boundary_distance = d;
        self
    }

    pub fn zero_locus_distance_fn(mut self, d: PointFn<T>) -> Self {
        self.zero_locus_distance = Some(d);
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &BoxRegion<T> {
        &self.bounds
    }

    pub fn lo(&self) -> Vec<T> {
        self.bounds.lo()
    }

    pub fn hi(&self) -> Vec<T> {
        self.bounds.hi()
    }

    pub fn diameter(&self) -> T {
        self.bounds.diameter()
    }

    /// Closed-box membership with a relative slack of `1e-12 * diameter`.
    pub fn contains(&self, x: &[T]) -> bool {
        self.bounds.contains_with_slack(x, self.diameter() * crate::scalar::achievable(lit::<T>(1e-12)))
    }

    pub fn boundary_distance(&self, x: &[T]) -> T {
        (self.boundary_distance)(x)
    }

    pub fn zero_locus_distance(&self, x: &[T]) -> Option<T> {
        self.zero_locus_distance.as_ref().map(|d| d(x))
    }
}

/// Nonnegative field `f` with gradient `grad` (already raised by the metric).
#[derive(Clone)]
pub struct ScalarField<T> {
    name: String,
    domain: DomainSpec<T>,
    f: PointFn<T>,
    grad: VectorFn<T>,
    metric: Option<MatrixFn<T>>,
    hess: Option<MatrixFn<T>>,
    flags: Vec<String>,
}

impl<T: Real> std::fmt::Debug for ScalarField<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("metric", &self.metric.is_some())
            .field("flags", &self.flags)
            .finish()
    }
}

impl<T: Real> ScalarField<T> {
    pub fn new(name: impl Into<String>, domain: DomainSpec<T>, f: PointFn<T>, grad: VectorFn<T>) -> Self {
        ScalarField { name: name.into(), domain, f, grad, metric: None, hess: None, flags: Vec::new() }
    }

    pub fn with_metric(mut self, metric: MatrixFn<T>) -> Self {
        self.metric = Some(metric);
        self
    }

    pub fn with_hessian(mut self, hess: MatrixFn<T>) -> Self {
        self.hess = Some(hess);
        self
    }

    pub fn with_flag(mut self, flag: impl Into<String>) -> Self {
        self.flags.push(flag.into());
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn flags(&self) -> &[String] {
        &self.flags
    }

    pub fn domain(&self) -> &DomainSpec<T> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn has_metric(&self) -> bool {
        self.metric.is_some()
    }

    pub fn value(&self, x: &[T]) -> T {
        (self.f)(x)
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        (self.grad)(x)
    }

    pub fn metric_at(&self, x: &[T]) -> Option<Vec<T>> {
        self.metric.as_ref().map(|g| g(x))
    }

    pub fn hessian(&self, x: &[T]) -> Option<Vec<T>> {
        self.hess.as_ref().map(|h| h(x))
    }

    /// Length of a tangent vector at `x` in the metric.
    pub fn tangent_norm(&self, x: &[T], v: &[T]) -> T {
        match &self.metric {
            Some(g) => linalg::quad_form(&g(x), v).max(T::zero()).sqrt(),
            None => linalg::norm(v),
        }
    }

    /// `|grad f|` in the metric.
    pub fn grad_norm(&self, x: &[T]) -> T {
        self.tangent_norm(x, &self.gradient(x))
    }

    /// Value, gradient and gradient norm in one evaluation.
    pub fn eval_all(&self, x: &[T]) -> (T, Vec<T>, T) {
        let g = self.gradient(x);
        let n = self.tangent_norm(x, &g);
        (self.value(x), g, n)
    }

    /// Euclidean differential `df` (lowered gradient).
    pub fn differential(&self, x: &[T]) -> Vec<T> {
        let g = self.gradient(x);
        match &self.metric {
            Some(m) => linalg::mat_vec(&m(x), &g),
            None => g,
        }
    }

    /// Randomized checks: `f >= 0`, metric positive-definite, and the gradient
    /// equal to `metric^{-1} df` with `df` from central differences. Points with
    /// `f <= min_f` are skipped for the gradient comparison.
    pub fn validate(&self, samples: usize, seed: u64, min_f: T, rel_tol: T) -> Result<(), FieldError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let bounds = self.domain.bounds();
        let h = self.domain.diameter() * lit(1e-6);
        for _ in 0..samples {
            let x = bounds.sample(&mut rng);
            let fx = self.value(&x);
            let pt = || x.iter().map(|&v| crate::scalar::to_f64(v)).collect::<Vec<_>>();
            if fx < T::zero() || !fx.is_finite() {
                return Err(FieldError::NegativeValue { point: pt(), value: crate::scalar::to_f64(fx) });
            }
            if let Some(g) = self.metric_at(&x) {
                if linalg::cholesky(&g, n).is_none() {
                    return Err(FieldError::MetricNotPositiveDefinite { point: pt() });
                }
            }
            if fx <= min_f {
                continue;
            }
            let mut fd = vec![T::zero(); n];
            let mut inside = true;
            for i in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] = xp[i] + h;
                xm[i] = xm[i] - h;
                if !self.domain.contains(&xp) || !self.domain.contains(&xm) {
                    inside = false;
                    break;
                }
                fd[i] = (self.value(&xp) - self.value(&xm)) / (h + h);
            }
            if !inside {
                continue;
            }
            let df = self.differential(&x);
            let err = linalg::dist(&df, &fd);
            let scale = linalg::norm(&df).max(lit(1e-8));
            if !(err <= rel_tol * scale) {
                return Err(FieldError::GradientMismatch { point: pt(), rel_err: crate::scalar::to_f64(err / scale) });
            }
        }
        Ok(())
    }
}

/// Named example field with an optional known desingularizing certificate.
#[derive(Clone)]
pub struct FieldZooEntry<T> {
    pub name: String,
    pub field: ScalarField<T>,
    pub known_certificate: Option<KLCertificate<T>>,
    pub known_exponent: Option<T>,
    pub notes: String,
}

impl<T: Real> std::fmt::Debug for FieldZooEntry<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldZooEntry")
            .field("name", &self.name)
            .field("field", &self.field)
            .field("known_certificate", &self.known_certificate)
            .field("known_exponent", &self.known_exponent)
            .field("notes", &self.notes)
            .finish()
    }
}
