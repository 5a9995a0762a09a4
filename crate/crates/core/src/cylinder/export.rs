use std::io::{self, Write};

use serde::Serialize;

use super::{Bucket, ComponentInfo, CylinderChart, CylinderReport};
use crate::linalg;
use crate::scalar::{to_f64, Real};

/// Greedy nearest-neighbour chain starting from the lexicographically smallest point.
pub fn polyline_order<T: Real>(points: &[Vec<T>]) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let start = (0..points.len())
        .min_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    let mut used = vec![false; points.len()];
    let mut order = vec![start];
    used[start] = true;
    while order.len() < points.len() {
        let cur = &points[*order.last().unwrap()];
        let next = (0..points.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| linalg::dist(cur, &points[a]).partial_cmp(&linalg::dist(cur, &points[b])).unwrap())
            .unwrap();
        used[next] = true;
        order.push(next);
    }
    order
}

fn row<T: Real>(x: &[T]) -> String {
    x.iter().map(|&v| format!("{:.17e}", to_f64(v))).collect::<Vec<_>>().join(",")
}

/// `trajectory, x_1..x_n, fhat, h, r_1..r_n` in polyline order.
pub fn write_h_csv<T: Real, W: Write>(chart: &CylinderChart<T>, mut w: W) -> io::Result<()> {
    let n = chart.field.dim();
    let mut header = vec!["trajectory".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("fhat".into());
    header.push("h".into());
    header.extend((1..=n).map(|i| format!("r{i}")));
    writeln!(w, "{}", header.join(","))?;
    let pts: Vec<Vec<T>> = chart.h_points.iter().map(|p| p.point.clone()).collect();
    for i in polyline_order(&pts) {
        let p = &chart.h_points[i];
        writeln!(
            w,
            "{},{},{:.17e},{:.17e},{}",
            p.trajectory,
            row(&p.point),
            to_f64(p.fhat),
            to_f64(p.h),
            row(&p.limit_target)
        )?;
    }
    Ok(())
}

/// `q_index, t, x_1..x_n` for the verification grid.
pub fn write_grid_csv<T: Real, W: Write>(report: &CylinderReport<T>, mut w: W) -> io::Result<()> {
    let n = report.grid.first().and_then(|r| r.first()).map_or(0, |p| p.len());
    let mut header = vec!["q_index".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (a, line) in report.grid.iter().enumerate() {
        for (x, &t) in line.iter().zip(&report.grid_t_values) {
            writeln!(w, "{a},{:.17e},{}", to_f64(t), row(x))?;
        }
    }
    Ok(())
}

/// H as a polyline plus the `t`-lines of the verification grid.
pub fn write_obj<T: Real, W: Write>(chart: &CylinderChart<T>, report: Option<&CylinderReport<T>>, mut w: W) -> io::Result<()> {
    let vert = |w: &mut W, x: &[T]| -> io::Result<()> {
        let mut c: Vec<f64> = x.iter().map(|&v| to_f64(v)).collect();
        c.resize(3, 0.0);
        writeln!(w, "v {:.12} {:.12} {:.12}", c[0], c[1], c[2])
    };
    let pts: Vec<Vec<T>> = chart.h_points.iter().map(|p| p.point.clone()).collect();
    let order = polyline_order(&pts);
    for &i in &order {
        vert(&mut w, &pts[i])?;
    }
    let mut base = order.len();
    if order.len() > 1 {
        let ids: Vec<String> = (1..=order.len()).map(|i| i.to_string()).collect();
        writeln!(w, "l {}", ids.join(" "))?;
    }
    if let Some(r) = report {
        for line in &r.grid {
            for x in line {
                vert(&mut w, x)?;
            }
            let ids: Vec<String> = (base + 1..=base + line.len()).map(|i| i.to_string()).collect();
            writeln!(w, "l {}", ids.join(" "))?;
            base += line.len();
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ChartManifest {
    pub field: String,
    pub dimension: usize,
    pub reference_level: f64,
    pub rho: f64,
    pub reference_points: usize,
    pub components: Vec<ComponentInfo<f64>>,
    pub buckets: Vec<Bucket<f64>>,
    pub c_sequence: Vec<f64>,
    pub h_points: usize,
    pub h_extent: f64,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
}

impl<T: Real> CylinderChart<T> {
    pub fn manifest(&self) -> ChartManifest {
        let c = &self.chart;
        ChartManifest {
            field: self.field.name().to_string(),
            dimension: self.field.dim(),
            reference_level: to_f64(c.c_ref),
            rho: to_f64(c.cert.rho),
            reference_points: c.reference_points.len(),
            components: c
                .components
                .iter()
                .map(|k| ComponentInfo {
                    index: k.index,
                    compact: k.compact,
                    points: k.points,
                    h_offset: to_f64(k.h_offset),
                    h_max: to_f64(k.h_max),
                })
                .collect(),
            buckets: c
                .buckets
                .iter()
                .map(|b| Bucket { index: b.index, h_lo: to_f64(b.h_lo), h_hi: to_f64(b.h_hi), points: b.points })
                .collect(),
            c_sequence: self.c_sequence.iter().map(|&v| to_f64(v)).collect(),
            h_points: self.h_points.len(),
            h_extent: to_f64(self.h_extent),
            bbox_lo: self.bbox_lo.iter().map(|&v| to_f64(v)).collect(),
            bbox_hi: self.bbox_hi.iter().map(|&v| to_f64(v)).collect(),
        }
    }
}
