//! Transversal hypersurface `H = f̂^{-1}(1)` and mapping-cylinder coordinates
//! for fields in two and three dimensions.

mod export;

use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;
use thiserror::Error;

pub use export::{polyline_order, write_grid_csv, write_h_csv, write_obj, ChartManifest};

use crate::desing::KLCertificate;
use crate::field::ScalarField;
use crate::flow::{flow_to_level, integrate, retract_with, safe_set_test, Clock, FlowControls, FlowError, Termination, Trajectory};
use crate::levelset::{project_to_level, sample_level};
use crate::region::BoxRegion;
use crate::linalg;
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error)]
pub enum CylinderError {
    #[error("cylinder charts are built in dimensions 2 and 3, not {0}")]
    Unsupported(usize),
    #[error("reference level is empty in the safe set: {0}")]
    EmptyLevel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point {point:?} has no reference tag: {reason}")]
    NoReferenceTag { point: Vec<f64>, reason: String },
    #[error("no valid level c_{index} (trajectory {trajectory}): {reason}")]
    SequenceFailure { index: usize, trajectory: usize, reason: String },
    #[error("trajectory {trajectory} crosses f̂ = 1 {crossings} times")]
    CrossingViolation { trajectory: usize, crossings: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Sampled point of the reference level with its exhaustion value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferencePoint<T> {
    pub point: Vec<T>,
    pub h: T,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentInfo<T> {
    pub index: usize,
    pub compact: bool,
    pub points: usize,
    /// Shift added to the chordal distances so bucket ranges stay disjoint.
    pub h_offset: T,
    pub h_max: T,
}

/// `A_i = h^{-1}((i/2 - 1/3, i/2 + 1/3))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket<T> {
    pub index: usize,
    pub h_lo: T,
    pub h_hi: T,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct TrajectorySpaceChart<T> {
    pub c_ref: T,
    pub reference_points: Vec<ReferencePoint<T>>,
    pub components: Vec<ComponentInfo<T>>,
    pub buckets: Vec<Bucket<T>>,
    pub cert: KLCertificate<T>,
    pub controls: FlowControls<T>,
    /// Largest distance from the reference level at which a tag is accepted.
    pub tag_radius: T,
}

fn smoothstep<T: Real>(s: T) -> T {
    s * s * (lit::<T>(3.0) - lit::<T>(2.0) * s)
}

/// C¹ hat of bucket `i` evaluated at `h`.
pub fn hat<T: Real>(i: usize, h: T) -> T {
    let s = (lit::<T>(2.0) * h - lit(i as f64)).abs();
    let third = T::one() / lit(3.0);
    if s <= third {
        T::one()
    } else if s < third + third {
        T::one() - smoothstep((s - third) * lit(3.0))
    } else {
        T::zero()
    }
}

impl<T: Real> TrajectorySpaceChart<T> {
    /// Nonzero `(i, phi_i(h))`.
    pub fn weights(&self, h: T) -> Vec<(usize, T)> {
        let c = (h * lit(2.0)).floor().to_usize().unwrap_or(0);
        (c.saturating_sub(1)..=c + 1).map(|i| (i, hat(i, h))).filter(|&(_, w)| w > T::zero()).collect()
    }

    pub fn max_bucket(&self) -> usize {
        self.buckets.iter().map(|b| b.index).max().unwrap_or(0)
    }

    /// Exhaustion value of a point on the reference level, interpolated from
    /// the two nearest reference points of the same component.
    pub fn exhaustion(&self, y: &[T]) -> Result<T, CylinderError> {
        let mut best = (T::infinity(), usize::MAX);
        for (i, r) in self.reference_points.iter().enumerate() {
            let d = linalg::dist(&r.point, y);
            if d < best.0 {
                best = (d, i);
            }
        }
        if best.1 == usize::MAX || best.0 > self.tag_radius {
            return Err(CylinderError::NoReferenceTag {
                point: y.iter().map(|&v| to_f64(v)).collect(),
                reason: format!("nearest reference point is {} away", best.0),
            });
        }
        let comp = self.reference_points[best.1].component;
        let mut second = (T::infinity(), usize::MAX);
        for (i, r) in self.reference_points.iter().enumerate() {
            if i != best.1 && r.component == comp {
                let d = linalg::dist(&r.point, y);
                if d < second.0 {
                    second = (d, i);
                }
            }
        }
        let h1 = self.reference_points[best.1].h;
        if second.1 == usize::MAX || best.0 == T::zero() {
            return Ok(h1);
        }
        let h2 = self.reference_points[second.1].h;
        Ok((h1 * second.0 + h2 * best.0) / (best.0 + second.0))
    }
}

#[derive(PartialEq)]
struct Visit<T>(T, usize);

impl<T: Real> Eq for Visit<T> {}

impl<T: Real> PartialOrd for Visit<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Visit<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.partial_cmp(&self.0).unwrap_or(std::cmp::Ordering::Equal).then(other.1.cmp(&self.1))
    }
}

/// Graph joining points closer than three covering radii of a farthest-point
/// net, and never closer than `floor`.
fn proximity_graph<T: Real>(pts: &[Vec<T>], net_size: usize, floor: T) -> (Vec<Vec<(usize, T)>>, T) {
    use rayon::prelude::*;
    let net = farthest_point_subset(pts, net_size);
    let cover = pts
        .par_iter()
        .map(|p| net.iter().map(|&i| linalg::dist(p, &pts[i])).fold(T::infinity(), T::min))
        .reduce(|| T::zero(), T::max);
    let cap = (cover * lit(3.0)).max(floor);
    let adj = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            pts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| (j, linalg::dist(p, q)))
                .filter(|e| e.1 <= cap)
                .collect()
        })
        .collect();
    (adj, cap)
}

fn dijkstra<T: Real>(adj: &[Vec<(usize, T)>], sources: &[(usize, T)]) -> Vec<T> {
    let mut dist = vec![T::infinity(); adj.len()];
    let mut heap = BinaryHeap::new();
    for &(i, d) in sources {
        if d < dist[i] {
            dist[i] = d;
            heap.push(Visit(d, i));
        }
    }
    while let Some(Visit(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Visit(nd, v));
            }
        }
    }
    dist
}

fn farthest_in<T: Real>(d: &[T], list: &[usize]) -> usize {
    *list.iter().max_by(|&&a, &&b| d[a].partial_cmp(&d[b]).unwrap().then(b.cmp(&a))).unwrap()
}

/// Dijkstra sources for a virtual origin halfway along the longest geodesic,
/// linked directly to every point within `reach`.
fn geodesic_midpoint<T: Real>(pts: &[Vec<T>], adj: &[Vec<(usize, T)>], list: &[usize], reach: T) -> Vec<(usize, T)> {
    let a = farthest_in(&dijkstra(adj, &[(list[0], T::zero())]), list);
    let da = dijkstra(adj, &[(a, T::zero())]);
    let b = farthest_in(&da, list);
    let half = da[b] * lit(0.5);
    let mut p = b;
    let mut mid = pts[b].clone();
    while da[p] > half {
        let prev = adj[p]
            .iter()
            .filter(|e| (da[e.0] + e.1 - da[p]).abs() <= da[p] * lit(1e-9))
            .max_by(|x, y| da[x.0].partial_cmp(&da[y.0]).unwrap());
        match prev {
            Some(&(q, w)) if da[q] <= half => {
                let s = (half - da[q]) / w;
                mid = pts[q].iter().zip(&pts[p]).map(|(&x, &y)| x + s * (y - x)).collect();
                break;
            }
            Some(&(q, _)) => {
                p = q;
                mid = pts[q].clone();
            }
            None => break,
        }
    }
    list.iter().map(|&i| (i, linalg::dist(&pts[i], &mid))).filter(|e| e.1 <= reach).collect()
}

/// Projects midpoints of sparse pairs onto the level until no hole wider than
/// about twice the median spacing remains.
fn fill_gaps<T: Real>(
    field: &ScalarField<T>,
    cert: &KLCertificate<T>,
    c_ref: T,
    region: &BoxRegion<T>,
    mut pts: Vec<Vec<T>>,
) -> Vec<Vec<T>> {
    use rayon::prelude::*;
    let nearest = |pts: &[Vec<T>], x: &[T], skip: usize| {
        pts.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, q)| linalg::dist(x, q)).fold(T::infinity(), T::min)
    };
    let nn: Vec<T> = (0..pts.len()).into_par_iter().map(|i| nearest(&pts, &pts[i], i)).collect();
    let mut sorted = nn;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let Some(&s) = sorted.get(sorted.len() / 2) else { return pts };
    if !(s > T::zero()) {
        return pts;
    }
    for _ in 0..8 {
        let candidates: Vec<Vec<T>> = (0..pts.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let pts = &pts;
                (i + 1..pts.len()).filter_map(move |j| {
                    let d = linalg::dist(&pts[i], &pts[j]);
                    if d <= s * lit(1.5) || d > s * lit(16.0) {
                        return None;
                    }
                    let m: Vec<T> = pts[i].iter().zip(&pts[j]).map(|(&a, &b)| (a + b) * lit(0.5)).collect();
                    (nearest(pts, &m, usize::MAX) > d * lit(0.45)).then_some(m)
                })
            })
            .collect();
        let mut added = 0;
        for m in candidates {
            let Some(p) = project_to_level(field, &m, c_ref, region) else { continue };
            if safe_set_test(field, &p, cert).in_v && nearest(&pts, &p, usize::MAX) > s * lit(0.75) {
                pts.push(p);
                added += 1;
            }
        }
        if added == 0 {
            break;
        }
    }
    pts
}

/// Samples `f^{-1}(c_ref) ∩ V`, sets `h` to the chordal distance through a
/// proximity graph from the point nearest each component's centroid
/// (`h ≡ 0` on compact components), and builds the buckets.
pub fn build_chart<T: Real>(
    field: &ScalarField<T>,
    cert: &KLCertificate<T>,
    c_ref: T,
    budget: usize,
    controls: &FlowControls<T>,
) -> Result<TrajectorySpaceChart<T>, CylinderError> {
    let n = field.dim();
    if !(n == 2 || n == 3) {
        return Err(CylinderError::Unsupported(n));
    }
    if !(c_ref > T::zero() && c_ref < cert.rho) {
        return Err(CylinderError::InvalidInput(format!("c_ref = {c_ref} is not in (0, rho = {})", cert.rho)));
    }
    let region = cert
        .region
        .intersect(field.domain().bounds())
        .ok_or_else(|| CylinderError::InvalidInput("certificate region misses the domain".into()))?;
    let sample = sample_level(field, c_ref, &region, budget.saturating_mul(4));
    let dense: Vec<Vec<T>> = sample.points.into_iter().filter(|p| safe_set_test(field, p, cert).in_v).collect();
    let pts: Vec<Vec<T>> = farthest_point_subset(&dense, budget).into_iter().map(|i| dense[i].clone()).collect();
    let pts = fill_gaps(field, cert, c_ref, &region, pts);
    if pts.is_empty() {
        return Err(CylinderError::EmptyLevel(sample.diagnostic.unwrap_or_else(|| "no sample lies in V".into())));
    }
    let (adj, reach) = proximity_graph(&pts, 16 * n, field.domain().diameter() / lit(20.0));
    let gap = adj
        .iter()
        .map(|e| e.iter().map(|x| x.1).fold(reach, T::min))
        .fold(T::zero(), T::max);
    let mut comp = vec![usize::MAX; pts.len()];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for s in 0..pts.len() {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut list = vec![s];
        comp[s] = id;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    list.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.push(list);
    }

    let psi_ref = cert.g(c_ref);
    let mut h = vec![T::zero(); pts.len()];
    let mut components = Vec::with_capacity(members.len());
    let mut next_bucket = 0usize;
    for (id, list) in members.iter().enumerate() {
        let m = list.len();
        let centroid: Vec<T> = (0..n).map(|a| list.iter().map(|&i| pts[i][a]).sum::<T>() / lit(m as f64)).collect();
        let extent = list
            .iter()
            .map(|&i| linalg::dist(&pts[i], &centroid))
            .fold(T::zero(), T::max)
            * lit(2.0);
        let slack = list
            .iter()
            .map(|&i| field.domain().boundary_distance(&pts[i]) - psi_ref)
            .fold(T::infinity(), T::min);
        let compact = slack > (extent * lit(0.02)).max(reach);
        let offset = lit::<T>(next_bucket as f64) * lit(0.5);
        let mut h_max = offset;
        if compact {
            for &i in list {
                h[i] = offset;
            }
        } else {
            let sources = geodesic_midpoint(&pts, &adj, list, reach);
            let d = dijkstra(&adj, &sources);
            for &i in list {
                h[i] = offset + d[i];
                h_max = h_max.max(h[i]);
            }
        }
        components.push(ComponentInfo { index: id, compact, points: m, h_offset: offset, h_max });
        let top = (h_max * lit(2.0) + lit(2.0 / 3.0)).floor().to_usize().unwrap_or(0);
        next_bucket = top + 2;
    }

    let reference_points: Vec<ReferencePoint<T>> = pts
        .into_iter()
        .zip(&h)
        .zip(&comp)
        .map(|((point, &h), &component)| ReferencePoint { point, h, component })
        .collect();
    let mut chart = TrajectorySpaceChart {
        c_ref,
        reference_points,
        components,
        buckets: Vec::new(),
        cert: cert.clone(),
        controls: *controls,
        tag_radius: gap * lit(2.0) + field.domain().diameter() * lit(1e-6),
    };
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for r in &chart.reference_points {
        for (i, _) in chart.weights(r.h) {
            *counts.entry(i).or_default() += 1;
        }
    }
    chart.buckets = counts
        .into_iter()
        .map(|(index, points)| {
            let c = lit::<T>(index as f64) * lit(0.5);
            let third = T::one() / lit(3.0);
            Bucket { index, h_lo: c - third, h_hi: c + third, points }
        })
        .collect();
    Ok(chart)
}

/// Point of a descending trajectory at level `c` (linear in `f` between samples).
fn point_at_level<T: Real>(traj: &Trajectory<T>, c: T) -> Option<Vec<T>> {
    let s = &traj.samples;
    let j = s.iter().position(|p| p.f <= c)?;
    if j == 0 {
        return Some(s[0].point.clone());
    }
    let (a, b) = (&s[j - 1], &s[j]);
    let w = (a.f - c) / (a.f - b.f);
    Some(a.point.iter().zip(&b.point).map(|(&x, &y)| x + w * (y - x)).collect())
}

/// `c_1 > c_2 > … ` with `c_n ≤ c_ref 2^{-n}` and `c_{n+1} ≤ c_n / 2`, halving
/// `c_n` until every reference trajectory meeting buckets `0..n` reaches level
/// `c_n` inside `V`.
pub fn choose_c_sequence<T: Real>(field: &ScalarField<T>, chart: &TrajectorySpaceChart<T>) -> Result<Vec<T>, CylinderError> {
    use rayon::prelude::*;
    let trajs: Vec<Result<Trajectory<T>, FlowError>> = chart
        .reference_points
        .par_iter()
        .map(|r| integrate(field, &r.point, Clock::Level, &chart.controls))
        .collect();
    let first_bucket: Vec<usize> =
        chart.reference_points.iter().map(|r| chart.weights(r.h).first().map(|w| w.0).unwrap_or(0)).collect();
    let count = chart.max_bucket() + 1;
    let mut seq: Vec<T> = Vec::with_capacity(count);
    for idx in 1..=count {
        let mut c = chart.c_ref * lit::<T>(0.5).powi(idx as i32);
        if let Some(&prev) = seq.last() {
            c = c.min(prev * lit(0.5));
        }
        let mut halvings = 0;
        loop {
            let bad = trajs.iter().enumerate().filter(|(i, _)| first_bucket[*i] < idx).find_map(|(i, t)| {
                let reason = match t {
                    Err(e) => Some(e.to_string()),
                    Ok(t) => match point_at_level(t, c) {
                        None => Some(format!("terminated ({:?}) above level {c}", t.termination)),
                        Some(p) if !safe_set_test(field, &p, &chart.cert).in_v => {
                            Some(format!("level-{c} point leaves the safe set"))
                        }
                        Some(_) => None,
                    },
                };
                reason.map(|r| (i, r))
            });
            match bad {
                None => break,
                Some((trajectory, reason)) => {
                    halvings += 1;
                    if halvings > 60 {
                        return Err(CylinderError::SequenceFailure { index: idx, trajectory, reason });
                    }
                    c = c * lit(0.5);
                }
            }
        }
        seq.push(c);
    }
    Ok(seq)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FhatValue<T> {
    pub value: T,
    /// `Φ̂ = Σ phi_i(h) / c_{i+1}`, constant along trajectories.
    pub phi_hat: T,
    pub h: T,
    /// Where the trajectory through the point meets the reference level.
    pub reference: Vec<T>,
}

/// `f̂(x) = f(x) Φ̂(x)` with `Φ̂` read off at the reference level.
pub fn evaluate_fhat<T: Real>(
    field: &ScalarField<T>,
    chart: &TrajectorySpaceChart<T>,
    c_sequence: &[T],
    x: &[T],
) -> Result<FhatValue<T>, CylinderError> {
    let f = field.value(x);
    if !(f > chart.controls.f_stop) {
        return Err(CylinderError::InvalidInput(format!("f(x) = {f} is at or below f_stop")));
    }
    let reference = if f == chart.c_ref {
        x.to_vec()
    } else {
        let t = flow_to_level(field, x, chart.c_ref, &chart.controls)?;
        if t.termination != Termination::ReachedLevel {
            return Err(CylinderError::NoReferenceTag {
                point: x.iter().map(|&v| to_f64(v)).collect(),
                reason: format!("flow to the reference level ended with {:?}", t.termination),
            });
        }
        t.end().to_vec()
    };
    let h = chart.exhaustion(&reference)?;
    let mut phi_hat = T::zero();
    for (i, w) in chart.weights(h) {
        let c = *c_sequence
            .get(i)
            .ok_or_else(|| CylinderError::InvalidInput(format!("c-sequence has no level for bucket {i}")))?;
        phi_hat = phi_hat + w / c;
    }
    Ok(FhatValue { value: f * phi_hat, phi_hat, h, reference })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HPoint<T> {
    pub trajectory: usize,
    pub point: Vec<T>,
    pub fhat: T,
    pub h: T,
    /// `R(q)`.
    pub limit_target: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingRecord {
    pub trajectory: usize,
    pub crossings: usize,
    /// `f̂` strictly decreasing over the checked samples.
    pub monotone: bool,
    pub samples_checked: usize,
}

#[derive(Clone)]
pub struct CylinderChart<T> {
    pub field: ScalarField<T>,
    pub chart: TrajectorySpaceChart<T>,
    pub c_sequence: Vec<T>,
    pub h_points: Vec<HPoint<T>>,
    pub crossings: Vec<CrossingRecord>,
    /// Largest exhaustion value over the H points.
    pub h_extent: T,
    pub bbox_lo: Vec<T>,
    pub bbox_hi: Vec<T>,
}

impl<T: Real> std::fmt::Debug for CylinderChart<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CylinderChart")
            .field("field", &self.field)
            .field("c_sequence", &self.c_sequence)
            .field("h_points", &self.h_points.len())
            .field("h_extent", &self.h_extent)
            .finish()
    }
}

const CHECKED_SAMPLES: usize = 48;

fn crossing<T: Real>(
    field: &ScalarField<T>,
    chart: &TrajectorySpaceChart<T>,
    seq: &[T],
    id: usize,
    traj: &Trajectory<T>,
) -> Result<(CrossingRecord, Option<HPoint<T>>), CylinderError> {
    let total = traj.samples.len();
    let mut picks: Vec<usize> = (0..CHECKED_SAMPLES).map(|i| i * (total - 1) / (CHECKED_SAMPLES - 1).max(1)).collect();
    picks.dedup();
    let stop = chart.controls.f_stop * lit(10.0);
    picks.retain(|&i| traj.samples[i].f > stop);
    let mut values = Vec::with_capacity(picks.len());
    for &i in &picks {
        values.push(evaluate_fhat(field, chart, seq, &traj.samples[i].point)?.value);
    }
    let tol = lit::<T>(1e-10);
    let monotone = values.windows(2).all(|w| w[1] - w[0] < tol);
    let above: Vec<bool> = values.iter().map(|&v| v > T::one()).collect();
    let crossings = above.windows(2).filter(|w| w[0] != w[1]).count();
    let record = CrossingRecord { trajectory: id, crossings, monotone, samples_checked: values.len() };
    if crossings != 1 || !above[0] {
        return Ok((record, None));
    }
    let j = above.iter().position(|&a| !a).unwrap();
    let (mut la, mut ga) = (traj.samples[picks[j - 1]].f, values[j - 1] - T::one());
    let (mut lb, mut gb) = (traj.samples[picks[j]].f, values[j] - T::one());
    let start = traj.samples[picks[j - 1]].point.clone();
    let mut best: Option<(Vec<T>, FhatValue<T>)> = None;
    let mut side = 0i32;
    for _ in 0..80 {
        let l = if gb != ga { la - ga * (lb - la) / (gb - ga) } else { (la + lb) * lit(0.5) };
        let l = if l > lb && l < la { l } else { (la + lb) * lit(0.5) };
        let p = flow_to_level(field, &start, l, &chart.controls)?;
        if p.termination != Termination::ReachedLevel {
            return Err(CylinderError::Flow(FlowError::Incomplete(p.termination)));
        }
        let q = p.end().to_vec();
        let v = evaluate_fhat(field, chart, seq, &q)?;
        let g = v.value - T::one();
        let done = g.abs() <= lit(1e-8);
        best = Some((q, v));
        if done {
            break;
        }
        if g > T::zero() {
            la = l;
            ga = g;
            if side == 1 {
                gb = gb * lit(0.5);
            }
            side = 1;
        } else {
            lb = l;
            gb = g;
            if side == -1 {
                ga = ga * lit(0.5);
            }
            side = -1;
        }
    }
    let (point, v) = best.unwrap();
    let limit_target = retract_with(field, &point, &chart.cert, &chart.controls)?;
    Ok((record, Some(HPoint { trajectory: id, point, fhat: v.value, h: v.h, limit_target })))
}

/// Locates the crossing of `f̂ = 1` on every trajectory. Fails on the first
/// trajectory without exactly one sign change.
pub fn extract_h<T: Real>(
    field: &ScalarField<T>,
    chart: &TrajectorySpaceChart<T>,
    c_sequence: &[T],
    trajectories: &[Trajectory<T>],
) -> Result<CylinderChart<T>, CylinderError> {
    use rayon::prelude::*;
    let results: Vec<Result<(CrossingRecord, Option<HPoint<T>>), CylinderError>> = trajectories
        .par_iter()
        .enumerate()
        .map(|(id, t)| crossing(field, chart, c_sequence, id, t))
        .collect();
    let mut crossings = Vec::with_capacity(results.len());
    let mut h_points = Vec::with_capacity(results.len());
    for r in results {
        let (rec, hp) = r?;
        match hp {
            Some(hp) => h_points.push(hp),
            None => {
                return Err(CylinderError::CrossingViolation { trajectory: rec.trajectory, crossings: rec.crossings });
            }
        }
        crossings.push(rec);
    }
    let n = field.dim();
    let mut bbox_lo = vec![T::infinity(); n];
    let mut bbox_hi = vec![T::neg_infinity(); n];
    for p in &h_points {
        for a in 0..n {
            bbox_lo[a] = bbox_lo[a].min(p.point[a]);
            bbox_hi[a] = bbox_hi[a].max(p.point[a]);
        }
    }
    let h_extent = h_points.iter().map(|p| p.h).fold(T::zero(), T::max);
    Ok(CylinderChart {
        field: field.clone(),
        chart: chart.clone(),
        c_sequence: c_sequence.to_vec(),
        h_points,
        crossings,
        h_extent,
        bbox_lo,
        bbox_hi,
    })
}

/// `Φ(q, t)`: the level-clock trajectory from `q` at level `t f(q)`; `t = 0`
/// gives the limit `R(q)`.
pub fn cylinder_coords<T: Real>(chart: &CylinderChart<T>, q: &[T], t: T) -> Result<Vec<T>, CylinderError> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(CylinderError::InvalidInput(format!("t = {t} is not in [0, 1]")));
    }
    let field = &chart.field;
    if t == T::one() {
        return Ok(q.to_vec());
    }
    if t == T::zero() {
        return Ok(retract_with(field, q, &chart.chart.cert, &chart.chart.controls)?);
    }
    let traj = flow_to_level(field, q, t * field.value(q), &chart.chart.controls)?;
    if traj.termination != Termination::ReachedLevel {
        return Err(CylinderError::Flow(FlowError::Incomplete(traj.termination)));
    }
    Ok(traj.end().to_vec())
}

/// Greedy farthest-point subset of `points` of size at most `k`.
pub fn farthest_point_subset<T: Real>(points: &[Vec<T>], k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut chosen = vec![0usize];
    let mut d: Vec<T> = points.iter().map(|p| linalg::dist(p, &points[0])).collect();
    while chosen.len() < k.min(points.len()) {
        let (i, &m) = d.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0))).unwrap();
        if !(m > T::zero()) {
            break;
        }
        chosen.push(i);
        for (j, p) in points.iter().enumerate() {
            d[j] = d[j].min(linalg::dist(p, &points[i]));
        }
    }
    chosen
}

/// Nearest-neighbour chain from the largest-`h` point, stopped at the first
/// step longer than four median spacings and closed when its ends are near.
fn curve_chain<T: Real>(pts: &[Vec<T>], ids: &[usize], refs: &[ReferencePoint<T>]) -> Vec<usize> {
    if ids.len() < 2 {
        return ids.to_vec();
    }
    let nn: Vec<T> = ids
        .iter()
        .map(|&i| ids.iter().filter(|&&j| j != i).map(|&j| linalg::dist(&pts[i], &pts[j])).fold(T::infinity(), T::min))
        .collect();
    let mut sorted = nn;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cap = sorted[sorted.len() / 2] * lit(4.0);
    let start = *ids.iter().max_by(|&&a, &&b| refs[a].h.partial_cmp(&refs[b].h).unwrap().then(b.cmp(&a))).unwrap();
    let mut used = vec![false; pts.len()];
    used[start] = true;
    let mut chain = vec![start];
    loop {
        let cur = &pts[*chain.last().unwrap()];
        let next = ids
            .iter()
            .filter(|&&j| !used[j])
            .map(|&j| (j, linalg::dist(cur, &pts[j])))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        match next {
            Some((j, d)) if d <= cap => {
                used[j] = true;
                chain.push(j);
            }
            _ => break,
        }
    }
    if chain.len() > 2 && linalg::dist(&pts[start], &pts[*chain.last().unwrap()]) <= cap {
        chain.push(start);
    }
    chain
}

/// About `k` points spread evenly over the reference level: at equal
/// arclength along each component's nearest-neighbour chain for curves (not
/// yet projected back onto the level), farthest-point otherwise.
pub fn spread_points<T: Real>(refs: &[ReferencePoint<T>], k: usize) -> Vec<Vec<T>> {
    let pts: Vec<Vec<T>> = refs.iter().map(|r| r.point.clone()).collect();
    if pts.first().map_or(true, |p| p.len() != 2) {
        return farthest_point_subset(&pts, k).into_iter().map(|i| pts[i].clone()).collect();
    }
    let comps = refs.iter().map(|r| r.component + 1).max().unwrap_or(0);
    let chains: Vec<(Vec<usize>, Vec<T>)> = (0..comps)
        .map(|c| {
            let ids: Vec<usize> = (0..refs.len()).filter(|&i| refs[i].component == c).collect();
            let chain = curve_chain(&pts, &ids, refs);
            let mut acc = vec![T::zero()];
            for w in chain.windows(2) {
                acc.push(*acc.last().unwrap() + linalg::dist(&pts[w[0]], &pts[w[1]]));
            }
            (chain, acc)
        })
        .collect();
    let total: T = chains.iter().map(|c| *c.1.last().unwrap()).sum();
    let mut out = Vec::with_capacity(k);
    for (chain, acc) in &chains {
        let len = *acc.last().unwrap();
        let share = if total > T::zero() { (len / total * lit(k as f64)).round().to_usize().unwrap_or(1) } else { 1 };
        let share = share.clamp(1, chain.len());
        let mut j = 0;
        for m in 0..share {
            let target = len * (lit::<T>(m as f64) + lit(0.5)) / lit(share as f64);
            while j + 1 < chain.len() && acc[j + 1] <= target {
                j += 1;
            }
            let x = if j + 1 < chain.len() {
                let w = (target - acc[j]) / (acc[j + 1] - acc[j]);
                pts[chain[j]].iter().zip(&pts[chain[j + 1]]).map(|(&a, &b)| a + w * (b - a)).collect()
            } else {
                pts[chain[j]].clone()
            };
            out.push(x);
        }
    }
    out
}

/// About `n` descending trajectories through an evenly spread subset of the
/// reference points, each started above the reference level when possible.
pub fn verification_trajectories<T: Real>(
    field: &ScalarField<T>,
    chart: &TrajectorySpaceChart<T>,
    n: usize,
) -> Result<Vec<Trajectory<T>>, CylinderError> {
    use rayon::prelude::*;
    let region = chart.cert.region.intersect(field.domain().bounds()).unwrap_or_else(|| chart.cert.region.clone());
    let picks: Vec<Vec<T>> = spread_points(&chart.reference_points, n)
        .into_iter()
        .map(|x| {
            project_to_level(field, &x, chart.c_ref, &region)
                .filter(|p| safe_set_test(field, p, &chart.cert).in_v)
                .unwrap_or_else(|| {
                    chart
                        .reference_points
                        .iter()
                        .min_by(|a, b| linalg::dist(&a.point, &x).partial_cmp(&linalg::dist(&b.point, &x)).unwrap())
                        .unwrap()
                        .point
                        .clone()
                })
        })
        .collect();
    let lift = (chart.c_ref * lit(2.0)).min((chart.c_ref + chart.cert.rho) * lit(0.5));
    picks
        .par_iter()
        .map(|q| {
            let start = match flow_to_level(field, q, lift, &chart.controls) {
                Ok(t) if t.termination == Termination::ReachedLevel && safe_set_test(field, t.end(), &chart.cert).in_v => {
                    t.end().to_vec()
                }
                _ => q.clone(),
            };
            Ok(integrate(field, &start, Clock::Level, &chart.controls)?)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderReport<T> {
    pub grid_q: usize,
    pub grid_t: usize,
    pub trajectories: usize,
    /// Trajectories with exactly one sign change of `f̂ - 1`.
    pub single_crossing: usize,
    pub monotone: usize,
    pub level_identity_max_err: T,
    pub retract_max_err: T,
    /// Smallest distance between images of distinct `(q, t)` with `t > 0`.
    pub min_separation: T,
    pub injective: bool,
    /// Largest image distance between grid neighbours.
    pub continuity_modulus: T,
    /// Largest distance from a sampled `∂Z` point to the nearest limit target.
    pub target_gap: T,
    pub charted_extent: T,
    pub covered: bool,
    pub h_extent: T,
    #[serde(skip)]
    pub grid: Vec<Vec<Vec<T>>>,
    #[serde(skip)]
    pub grid_t_values: Vec<T>,
}

/// Level identity, injectivity, continuity and coverage proxies on an
/// `nq × nt` grid of `(q, t)` with `t` uniform in `[0, 1]`.
pub fn verify_cylinder<T: Real>(chart: &CylinderChart<T>, nq: usize, nt: usize) -> Result<CylinderReport<T>, CylinderError> {
    use rayon::prelude::*;
    let field = &chart.field;
    let hp: Vec<Vec<T>> = chart.h_points.iter().map(|p| p.point.clone()).collect();
    let mut qs = farthest_point_subset(&hp, nq);
    let sub: Vec<Vec<T>> = qs.iter().map(|&i| hp[i].clone()).collect();
    let order = polyline_order(&sub);
    qs = order.iter().map(|&i| qs[i]).collect();
    let nt = nt.max(2);
    let ts: Vec<T> = (0..nt).map(|j| lit::<T>(j as f64) / lit((nt - 1) as f64)).collect();
    let grid: Vec<Vec<Vec<T>>> = qs
        .par_iter()
        .map(|&i| ts.iter().map(|&t| cylinder_coords(chart, &hp[i], t)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;

    let mut level_err = T::zero();
    let mut retract_err = T::zero();
    let mut modulus = T::zero();
    for (a, &i) in qs.iter().enumerate() {
        let fq = field.value(&hp[i]);
        for (j, &t) in ts.iter().enumerate() {
            let img = &grid[a][j];
            if t > T::zero() {
                level_err = level_err.max((field.value(img) - t * fq).abs());
            }
            if j + 1 < nt {
                modulus = modulus.max(linalg::dist(img, &grid[a][j + 1]));
            }
            if a + 1 < qs.len() {
                modulus = modulus.max(linalg::dist(img, &grid[a + 1][j]));
            }
        }
        retract_err = retract_err.max(linalg::dist(&grid[a][0], &chart.h_points[i].limit_target));
    }
    let images: Vec<&Vec<T>> = grid.iter().flat_map(|row| row.iter().skip(1)).collect();
    let min_separation = (0..images.len())
        .into_par_iter()
        .map(|i| ((i + 1)..images.len()).map(|j| linalg::dist(images[i], images[j])).fold(T::infinity(), T::min))
        .reduce(|| T::infinity(), T::min);
    let injective = min_separation > field.domain().diameter() * lit(1e-9);

    let refs: Vec<Vec<T>> = chart.chart.reference_points.iter().map(|r| r.point.clone()).collect();
    let net: Vec<Vec<T>> = farthest_point_subset(&refs, 400).into_iter().map(|i| refs[i].clone()).collect();
    let boundary: Vec<Vec<T>> = net
        .par_iter()
        .filter_map(|p| retract_with(field, p, &chart.chart.cert, &chart.chart.controls).ok())
        .collect();
    let targets: Vec<&Vec<T>> = chart.h_points.iter().map(|p| &p.limit_target).collect();
    let target_gap = boundary
        .par_iter()
        .map(|b| targets.iter().map(|t| linalg::dist(b, t)).fold(T::infinity(), T::min))
        .reduce(|| T::zero(), T::max);
    let charted_extent = boundary
        .par_iter()
        .map(|a| boundary.iter().map(|b| linalg::dist(a, b)).fold(T::zero(), T::max))
        .reduce(|| T::zero(), T::max);
    let covered = !boundary.is_empty() && target_gap < charted_extent * lit(0.01);

    Ok(CylinderReport {
        grid_q: qs.len(),
        grid_t: nt,
        trajectories: chart.crossings.len(),
        single_crossing: chart.crossings.iter().filter(|c| c.crossings == 1).count(),
        monotone: chart.crossings.iter().filter(|c| c.monotone).count(),
        level_identity_max_err: level_err,
        retract_max_err: retract_err,
        min_separation,
        injective,
        continuity_modulus: modulus,
        target_gap,
        charted_extent,
        covered,
        h_extent: chart.h_extent,
        grid,
        grid_t_values: ts,
    })
}
