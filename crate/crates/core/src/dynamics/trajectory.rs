use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, Scalar};

/// Time-ordered states sampled at a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    states: Vec<DVector<T>>,
    dt: T,
    system_id: String,
}

impl<T: Scalar> Trajectory<T> {
    /// Validates and wraps `states`. Needs at least two states of one
    /// common dimension, all finite, and `dt > 0`.
    pub fn new(states: Vec<DVector<T>>, dt: T, system_id: impl Into<String>) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return invalid("dt must be positive and finite");
        }
        if states.len() < 2 {
            return invalid("trajectory needs at least two states");
        }
        let n = states[0].len();
        if n == 0 {
            return invalid("state dimension must be at least 1");
        }
        for (i, s) in states.iter().enumerate() {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "state dimension",
                    expected: n,
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("state {i}")));
            }
        }
        Ok(Self {
            states,
            dt,
            system_id: system_id.into(),
        })
    }

    pub fn states(&self) -> &[DVector<T>] {
        &self.states
    }

    pub fn into_states(self) -> Vec<DVector<T>> {
        self.states
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn system_id(&self) -> &str {
        &self.system_id
    }

    /// Number of states (`steps + 1`).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn last(&self) -> &DVector<T> {
        self.states.last().expect("nonempty by construction")
    }

    /// Contiguous sub-trajectory `[start, end)`; needs at least two states.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if end > self.states.len() || start + 2 > end {
            return invalid(format!("window [{start}, {end}) out of range"));
        }
        Ok(Self {
            states: self.states[start..end].to_vec(),
            dt: self.dt,
            system_id: self.system_id.clone(),
        })
    }

    /// Drops the first `n` states (burn-in).
    pub fn skip(&self, n: usize) -> Result<Self> {
        self.window(n, self.states.len())
    }

    /// Values of coordinate `c` across time.
    pub fn coordinate(&self, c: usize) -> Vec<T> {
        self.states.iter().map(|s| s[c]).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push('t');
        for i in 0..self.dim() {
            let _ = write!(out, ",x{i}");
        }
        out.push('\n');
        let dt = self.dt.to_f64_lossy();
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(&fmt_float(i as f64 * dt));
            for v in s.iter() {
                out.push(',');
                out.push_str(&fmt_float(v.to_f64_lossy()));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parses the CSV written by [`Trajectory::to_csv_string`]; extra `z*`
    /// columns are ignored. `dt` is recovered from the time column.
    pub fn from_csv_str(text: &str, system_id: impl Into<String>) -> Result<Self> {
        let table = parse_table(text)?;
        let xcols: Vec<usize> = table
            .header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with('x'))
            .map(|(i, _)| i)
            .collect();
        if xcols.is_empty() {
            return Err(Error::Parse("no x columns in header".into()));
        }
        let tcol = column_index(&table.header, "t")?;
        if table.rows.len() < 2 {
            return invalid("trajectory CSV needs at least two rows");
        }
        let dt = table.rows[1][tcol] - table.rows[0][tcol];
        let states = table
            .rows
            .iter()
            .map(|r| DVector::from_iterator(xcols.len(), xcols.iter().map(|&c| lit::<T>(r[c]))))
            .collect();
        Self::new(states, lit(dt), system_id)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv_str(&text, id)
    }
}

/// Latent path `z_t` with its observations `x_t`, sampled jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedLatentTrajectory<T: Scalar> {
    pub latents: Vec<DVector<T>>,
    pub observations: Vec<DVector<T>>,
    pub dt: T,
}

impl<T: Scalar> PairedLatentTrajectory<T> {
    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    /// Observation path as a [`Trajectory`].
    pub fn observed(&self, system_id: &str) -> Result<Trajectory<T>> {
        Trajectory::new(self.observations.clone(), self.dt, system_id)
    }

    pub fn to_csv_string(&self) -> String {
        let n = self.observations.first().map_or(0, |v| v.len());
        let d = self.latents.first().map_or(0, |v| v.len());
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",x{i}");
        }
        for i in 0..d {
            let _ = write!(out, ",z{i}");
        }
        out.push('\n');
        let dt = self.dt.to_f64_lossy();
        for (i, (x, z)) in self.observations.iter().zip(&self.latents).enumerate() {
            out.push_str(&fmt_float(i as f64 * dt));
            for v in x.iter().chain(z.iter()) {
                out.push(',');
                out.push_str(&fmt_float(v.to_f64_lossy()));
            }
            out.push('\n');
        }
        out
    }
}

/// Fixed scientific format with 17 significant digits; round-trips `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub(crate) fn parse_table(text: &str) -> Result<Table> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", ln + 1)))?;
        if row.len() != header.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, header has {}",
                ln + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn column_index(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Trajectory::new(vec![v(&[1.0])], 0.1, "a").is_err());
        assert!(Trajectory::new(vec![v(&[1.0]), v(&[1.0])], 0.0, "a").is_err());
        assert!(Trajectory::new(vec![v(&[1.0]), v(&[1.0, 2.0])], 0.1, "a").is_err());
        assert!(Trajectory::new(vec![v(&[1.0]), v(&[f64::NAN])], 0.1, "a").is_err());
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let t = Trajectory::new(vec![v(&[1.0, -2.5]), v(&[0.1, 1e-20]), v(&[3.0, 4.0])], 0.25, "s")
            .unwrap();
        let text = t.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x0,x1");
        let second: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
        assert_eq!(second[0].parse::<f64>().unwrap(), 0.25);
        // 17 significant digits in the mantissa.
        assert!(second[1].split('e').next().unwrap().replace(['.', '-'], "").len() >= 15);
        let back = Trajectory::<f64>::from_csv_str(&text, "s").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn paired_csv_has_latent_columns_after_states() {
        let p = PairedLatentTrajectory {
            latents: vec![v(&[1.0]), v(&[2.0])],
            observations: vec![v(&[3.0, 4.0]), v(&[5.0, 6.0])],
            dt: 1.0,
        };
        let text = p.to_csv_string();
        assert!(text.starts_with("t,x0,x1,z0\n"));
        let back = Trajectory::<f64>::from_csv_str(&text, "p").unwrap();
        assert_eq!(back.states()[1], v(&[5.0, 6.0]));
    }
}
