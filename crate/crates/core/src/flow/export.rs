use std::io::{self, Write};

use serde::Serialize;

use super::{Clock, Termination, Trajectory};
use crate::scalar::{to_f64, Real};

/// Summary record written next to trajectory CSVs.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryManifest {
    pub clock: Clock,
    pub termination: Termination,
    pub samples: usize,
    pub start: Vec<f64>,
    pub f0: f64,
    pub end: Vec<f64>,
    pub limit_point: Option<Vec<f64>>,
    pub omega_plus: f64,
    pub length: f64,
}

impl<T: Real> Trajectory<T> {
    pub fn manifest(&self) -> TrajectoryManifest {
        TrajectoryManifest {
            clock: self.clock,
            termination: self.termination,
            samples: self.samples.len(),
            start: super::point_f64(self.start()),
            f0: to_f64(self.f0),
            end: super::point_f64(self.end()),
            limit_point: self.limit_point.as_deref().map(super::point_f64),
            omega_plus: to_f64(self.omega_plus()),
            length: to_f64(self.length()),
        }
    }

    /// CSV with columns `s, x_1..x_n, f, arclen`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.start().len();
        let mut header = vec!["s".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.push("f".into());
        header.push("arclen".into());
        writeln!(w, "{}", header.join(","))?;
        for smp in &self.samples {
            write!(w, "{}", smp.s)?;
            for v in &smp.point {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", smp.f, smp.arclen)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::field::zoo_entry;
    use crate::flow::{integrate, Clock, FlowControls};

    #[test]
    fn csv_has_header_and_rows() {
        let e = zoo_entry::<f64>("disk").unwrap();
        let t = integrate(&e.field, &[2.0, 0.0], Clock::Level, &FlowControls::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,x_1,x_2,f,arclen\n"));
        assert_eq!(text.lines().count(), t.samples.len() + 1);
        assert_eq!(t.manifest().samples, t.samples.len());
    }
}
