//! CSV traces and metrics files.

use std::io::Write;

use empc_core::harness::{Metrics, Trace};

/// Fixed leading columns; estimate and plant-state columns follow.
pub const TRACE_HEADER: [&str; 6] = ["t", "r", "y", "u", "region", "saturated"];

pub fn trace_header(trace: &Trace) -> Vec<String> {
    let (nx, ne) = trace.rows.first().map_or((0, 0), |r| (r.x.len(), r.xe_hat.len()));
    let mut h: Vec<String> = TRACE_HEADER.iter().map(|s| s.to_string()).collect();
    h.extend((1..=nx).map(|i| format!("x{i}")));
    h.extend((1..=ne).map(|i| format!("xhat{i}")));
    h
}

/// Numbers use the shortest representation that reads back exactly, so
/// reruns are byte-identical.
pub fn write_trace<W: Write>(trace: &Trace, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(trace_header(trace))?;
    for row in &trace.rows {
        let mut rec = vec![
            row.t.to_string(),
            row.r.to_string(),
            row.y.to_string(),
            row.u.to_string(),
            row.region.map_or(String::new(), |r| r.to_string()),
            u8::from(row.saturated).to_string(),
        ];
        rec.extend(row.x.iter().map(f64::to_string));
        rec.extend(row.xe_hat.iter().map(f64::to_string));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn metrics_text(trace: &Trace, m: &Metrics, violations: usize) -> String {
    let settle = |s: Option<f64>| s.map_or_else(|| "not-settled".to_string(), |v| format!("{v:.6}"));
    let each: Vec<String> = m.settling_times.iter().map(|s| settle(*s)).collect();
    format!(
        "controller = {}\nsamples = {}\nise = {:.9}\niae = {:.9}\nsettling_time = {}\nsettling_times = {}\n\
         overshoot_pct = {:.6}\nsteady_state_error = {:.9}\ninput_violations = {}\n",
        trace.controller,
        trace.rows.len(),
        m.ise,
        m.iae,
        settle(m.settling_time),
        each.join(" "),
        m.overshoot_pct,
        m.steady_state_error,
        violations
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use empc_core::harness::TraceRow;

    #[test]
    fn header_and_rows() {
        let trace = Trace {
            controller: "pi".into(),
            ts: 0.5,
            rows: vec![TraceRow {
                t: 0.5,
                r: 1.0,
                y: 0.25,
                u: 24.0,
                x: vec![0.0, 0.25],
                xe_hat: vec![0.0, 0.2, 0.1],
                region: None,
                saturated: true,
                theta: vec![],
            }],
        };
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,r,y,u,region,saturated,x1,x2,xhat1,xhat2,xhat3\n0.5,1,0.25,24,,1,0,0.25,0,0.2,0.1\n"
        );
    }
}
