use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use nalgebra::Vector3;

use crate::dynamics::{Leg, RobotState};
use crate::linearization::NUM_LEGS;
use crate::locomotion::LegMode;
use crate::qp::QpStatus;

/// One simulation tick, recorded before the state is advanced.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub state: RobotState,
    pub feet: [Vector3<f64>; NUM_LEGS],
    pub forces: [Vector3<f64>; NUM_LEGS],
    pub torques: [Vector3<f64>; NUM_LEGS],
    /// Status of the MPC solve run on this tick, if one ran.
    pub qp_status: Option<QpStatus>,
    pub qp_iterations: usize,
    pub fallback: bool,
    pub modes: [LegMode; NUM_LEGS],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub records: Vec<TickRecord>,
}

/// Nine significant digits; scientific notation outside `[1e-4, 1e15)`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..15).contains(&exp) {
        return format!("{x:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit
    let digits = s.trim_start_matches('-').replace('.', "");
    let significant = digits.trim_start_matches('0').len();
    if significant > 9 && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

impl TrajectoryLog {
    pub fn header() -> String {
        let mut cols: Vec<String> = ["t", "x", "y", "z", "roll", "pitch", "yaw"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                cols.push(format!("r{i}{j}"));
            }
        }
        cols.extend(["wx", "wy", "wz", "vx", "vy", "vz"].map(String::from));
        for leg in Leg::ALL {
            cols.extend(["x", "y", "z"].map(|a| format!("foot_{}_{a}", leg.name())));
        }
        for leg in Leg::ALL {
            cols.extend(["x", "y", "z"].map(|a| format!("f_{}_{a}", leg.name())));
        }
        for leg in Leg::ALL {
            cols.extend(["abad", "hip", "knee"].map(|a| format!("tau_{}_{a}", leg.name())));
        }
        cols.extend(["qp_status", "qp_iterations"].map(String::from));
        for leg in Leg::ALL {
            cols.push(format!("mode_{}", leg.name()));
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::header())?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            let s = &r.state;
            let mut nums: Vec<f64> = vec![r.t];
            nums.extend(s.position.iter());
            nums.extend(s.euler().iter());
            for i in 0..3 {
                for j in 0..3 {
                    nums.push(s.rotation[(i, j)]);
                }
            }
            nums.extend(s.angular_velocity.iter());
            nums.extend(s.linear_velocity.iter());
            for v in r.feet.iter().chain(&r.forces).chain(&r.torques) {
                nums.extend(v.iter());
            }
            for (k, v) in nums.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format_sig9(*v));
            }
            let status = match (r.qp_status, r.fallback) {
                (_, true) => "fallback",
                (Some(st), false) => st.as_str(),
                (None, false) => "",
            };
            let _ = write!(line, ",{status},{}", r.qp_iterations);
            for m in &r.modes {
                line.push(',');
                line.push_str(m.as_str());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Flat `key = value` metrics document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummaryMetrics {
    pub values: BTreeMap<String, MetricValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Bool(bool),
    Int(u64),
    Float(f64),
    Text(String),
}

impl SummaryMetrics {
    pub fn set(&mut self, key: impl Into<String>, value: MetricValue) {
        self.values.insert(key.into(), value);
    }

    pub fn float(&self, key: &str) -> Option<f64> {
        match self.values.get(key)? {
            MetricValue::Float(v) => Some(*v),
            MetricValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        match self.values.get(key)? {
            MetricValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let value = match v {
                MetricValue::Bool(b) => b.to_string(),
                MetricValue::Int(i) => i.to_string(),
                MetricValue::Float(f) => format_sig9(*f),
                MetricValue::Text(s) => format!("{s:?}"),
            };
            let _ = writeln!(out, "{k} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(-0.00123456789123), "-0.00123456789");
        assert_eq!(format_sig9(123456.789123), "123456.789");
        assert_eq!(format_sig9(9.999999999), "10.0000000");
        assert_eq!(format_sig9(1.5e10), "15000000000");
        assert_eq!(format_sig9(-1.914866901e-14), "-1.91486690e-14");
        assert_eq!(format_sig9(2.5e20), "2.50000000e20");
        assert_eq!(format_sig9(0.000123456789), "0.000123456789");
    }

    #[test]
    fn header_starts_with_time() {
        let h = TrajectoryLog::header();
        assert!(h.starts_with("t,x,y,z,"));
        assert!(h.ends_with("mode_RR"));
    }

    #[test]
    fn metrics_render_sorted() {
        let mut m = SummaryMetrics::default();
        m.set("b", MetricValue::Float(0.5));
        m.set("a", MetricValue::Bool(true));
        assert_eq!(m.render(), "a = true\nb = 0.500000000\n");
    }
}
