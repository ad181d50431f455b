//! CSV writers. Floats are written in `{:.16e}` form so that a round trip
//! through text is lossless and reruns are byte-identical.

use std::io::Write;

use crate::dynamics::Trajectory;
use crate::functionals::DriftReport;
use crate::kinetic::{BipolarReport, OrderParameterSeries};
use crate::ws_transform::WsState;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// `t, particle_index, coordinate_0 … coordinate_d`, one row per particle
/// per snapshot.
pub fn write_trajectory<W: Write>(traj: &Trajectory, dim: usize, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    let mut header = vec!["t".to_string(), "particle_index".to_string()];
    header.extend((0..dim).map(|k| format!("coordinate_{k}")));
    out.write_record(&header)?;
    for (t, e) in traj.times.iter().zip(&traj.states) {
        for (i, p) in e.points().enumerate() {
            let mut row = vec![fmt_f64(*t), i.to_string()];
            row.extend(p.iter().map(|v| fmt_f64(*v)));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `t, X_0 … X_d` at every snapshot.
pub fn write_field<W: Write>(traj: &Trajectory, dim: usize, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|k| format!("X_{k}")));
    out.write_record(&header)?;
    for (t, x) in traj.times.iter().zip(&traj.field_samples) {
        let mut row = vec![fmt_f64(*t)];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `t, w_0 … w_d, R_0_0 … R_d_d` with R in row-major order.
pub fn write_ws_states<W: Write>(states: &[WsState], dim: usize, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|k| format!("w_{k}")));
    for i in 0..dim {
        header.extend((0..dim).map(|j| format!("R_{i}_{j}")));
    }
    out.write_record(&header)?;
    for s in states {
        let mut row = vec![fmt_f64(s.time)];
        row.extend(s.w.as_slice().iter().map(|v| fmt_f64(*v)));
        let m = s.r.matrix();
        for i in 0..dim {
            row.extend((0..dim).map(|j| fmt_f64(m[(i, j)])));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `t, estimate, relative_drift`.
pub fn write_drift<W: Write>(report: &DriftReport, w: W) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "estimate", "relative_drift"])?;
    for ((t, e), r) in report.times.iter().zip(&report.estimates).zip(&report.relative_drift) {
        out.write_record([fmt_f64(*t), fmt_f64(*e), fmt_f64(*r)])?;
    }
    out.flush()?;
    Ok(())
}

/// `t, R2, dR2_analytic, mass_plus, mass_minus`. Masses are left empty
/// when no bipolar report is available.
pub fn write_order_parameter<W: Write>(
    series: &OrderParameterSeries,
    bipolar: Option<&BipolarReport>,
    w: W,
) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "R2", "dR2_analytic", "mass_plus", "mass_minus"])?;
    for i in 0..series.times.len() {
        let (plus, minus) = match bipolar {
            Some(b) => (
                fmt_f64(b.snapshots[i].mass_plus),
                fmt_f64(b.snapshots[i].mass_minus),
            ),
            None => (String::new(), String::new()),
        };
        out.write_record([
            fmt_f64(series.times[i]),
            fmt_f64(series.r2[i]),
            fmt_f64(series.dr2_analytic[i]),
            plus,
            minus,
        ])?;
    }
    out.flush()?;
    Ok(())
}
