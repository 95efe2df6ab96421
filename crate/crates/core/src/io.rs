//! File formats: headered comma-separated tables with 9 significant digits,
//! and the `key=value` fit summary.

use std::io::{Read, Write};

use thiserror::Error;

use crate::dynamics::OscillationSample;
use crate::rl::{
    DiscreteState, EpisodeStats, QTable, StepRecord, ACTION_COUNT, STATE_COUNT,
};
use crate::sysid::FitResult;

pub const TRACE_HEADER: [&str; 2] = ["t", "theta_rad"];
pub const QTABLE_HEADER: [&str; 6] = ["phi_bin", "phidot_bin", "x_bin", "xdot_bin", "action", "value"];
pub const CURVE_HEADER: [&str; 4] = ["episode", "steps", "reward", "terminal"];
pub const ROLLOUT_HEADER: [&str; 7] = ["t", "u_cmd", "u_actual", "x", "x_dot", "phi", "phi_dot"];
pub const TRIALS_HEADER: [&str; 4] = ["trial", "steps", "survival_s", "terminal"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("table shape: {0}")]
    Shape(String),
}

fn csv_error(e: csv::Error) -> FormatError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FormatError::Io(io),
        other => FormatError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Shortest decimal rendering with at most 9 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{v:.8e}");
        let (mantissa, exponent) = s.split_once('e').expect("exponent form");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    }
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>, FormatError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header).map_err(csv_error)?;
    Ok(wr)
}

fn reader<R: Read>(r: R, header: &[&str]) -> Result<csv::Reader<R>, FormatError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let got = rd.headers().map_err(csv_error)?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(FormatError::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(rd)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, FormatError>
where
    T::Err: std::fmt::Display,
{
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| FormatError::Parse {
        line,
        message: format!("missing column `{name}`"),
    })?;
    raw.parse().map_err(|e| FormatError::Parse {
        line,
        message: format!("column `{name}`: {e}"),
    })
}

pub fn write_trace<W: Write>(w: W, samples: &[OscillationSample]) -> Result<(), FormatError> {
    let mut wr = writer(w, &TRACE_HEADER)?;
    for s in samples {
        wr.write_record([fmt_sig(s.t), fmt_sig(s.theta)]).map_err(csv_error)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<OscillationSample>, FormatError> {
    let mut rd = reader(r, &TRACE_HEADER)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_error)?;
        out.push(OscillationSample {
            t: field(&rec, 0, "t")?,
            theta: field(&rec, 1, "theta_rad")?,
        });
    }
    Ok(out)
}

/// Rows in state-index order, actions innermost: 2,160 rows for the pendulum table.
pub fn write_qtable<W: Write>(w: W, table: &QTable) -> Result<(), FormatError> {
    if table.n_states() != STATE_COUNT || table.n_actions() != ACTION_COUNT {
        return Err(FormatError::Shape(format!(
            "{}x{} table, expected {STATE_COUNT}x{ACTION_COUNT}",
            table.n_states(),
            table.n_actions()
        )));
    }
    let mut wr = writer(w, &QTABLE_HEADER)?;
    for s in DiscreteState::all() {
        for a in 0..ACTION_COUNT {
            wr.write_record([
                s.phi_bin.to_string(),
                s.phidot_bin.to_string(),
                s.x_bin.to_string(),
                s.xdot_bin.to_string(),
                a.to_string(),
                fmt_sig(table.get(s.index(), a)),
            ])
            .map_err(csv_error)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads a table written by [`write_qtable`]; every state-action pair must
/// appear exactly once.
pub fn read_qtable<R: Read>(r: R) -> Result<QTable, FormatError> {
    let mut rd = reader(r, &QTABLE_HEADER)?;
    let mut table = QTable::pendulum();
    let mut seen = vec![false; STATE_COUNT * ACTION_COUNT];
    let mut rows = 0usize;
    for rec in rd.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let s = DiscreteState::new(
            field(&rec, 0, "phi_bin")?,
            field(&rec, 1, "phidot_bin")?,
            field(&rec, 2, "x_bin")?,
            field(&rec, 3, "xdot_bin")?,
        )
        .ok_or_else(|| FormatError::Shape(format!("line {line}: bin index out of range")))?;
        let a: usize = field(&rec, 4, "action")?;
        if a >= ACTION_COUNT {
            return Err(FormatError::Shape(format!("line {line}: action {a} out of range")));
        }
        let v: f64 = field(&rec, 5, "value")?;
        if !v.is_finite() {
            return Err(FormatError::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        let slot = s.index() * ACTION_COUNT + a;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(FormatError::Shape(format!("line {line}: duplicate entry")));
        }
        table.set(s.index(), a, v);
        rows += 1;
    }
    if rows != STATE_COUNT * ACTION_COUNT {
        return Err(FormatError::Shape(format!(
            "{rows} rows, expected {}",
            STATE_COUNT * ACTION_COUNT
        )));
    }
    Ok(table)
}

pub fn write_curve<W: Write>(w: W, curve: &[EpisodeStats]) -> Result<(), FormatError> {
    let mut wr = writer(w, &CURVE_HEADER)?;
    for (i, e) in curve.iter().enumerate() {
        wr.write_record([
            i.to_string(),
            e.steps_survived.to_string(),
            fmt_sig(e.cumulative_reward),
            e.terminal_reason.to_string(),
        ])
        .map_err(csv_error)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_rollout<W: Write>(w: W, records: &[StepRecord]) -> Result<(), FormatError> {
    let mut wr = writer(w, &ROLLOUT_HEADER)?;
    for r in records {
        let s = r.state;
        wr.write_record(
            [r.t, r.u_cmd, r.u_actual, s.x, s.x_dot, s.phi, s.phi_dot].map(fmt_sig),
        )
        .map_err(csv_error)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_trials<W: Write>(w: W, trials: &[EpisodeStats], h: f64) -> Result<(), FormatError> {
    let mut wr = writer(w, &TRIALS_HEADER)?;
    for (i, e) in trials.iter().enumerate() {
        wr.write_record([
            i.to_string(),
            e.steps_survived.to_string(),
            fmt_sig(e.steps_survived as f64 * h),
            e.terminal_reason.to_string(),
        ])
        .map_err(csv_error)?;
    }
    wr.flush()?;
    Ok(())
}

/// `key=value` lines: `I`, `b`, `theta0`, `theta_dot0`, `rss`, `converged`,
/// then `iterations`.
pub fn write_fit<W: Write>(mut w: W, fit: &FitResult) -> Result<(), FormatError> {
    writeln!(w, "I={}", fmt_sig(fit.params.inertia))?;
    writeln!(w, "b={}", fmt_sig(fit.params.damping))?;
    writeln!(w, "theta0={}", fmt_sig(fit.theta0))?;
    writeln!(w, "theta_dot0={}", fmt_sig(fit.theta_dot0))?;
    writeln!(w, "rss={}", fmt_sig(fit.rss))?;
    writeln!(w, "converged={}", fit.converged)?;
    writeln!(w, "iterations={}", fit.iterations)?;
    Ok(())
}

/// Parse a fit summary back into `(key, value)` pairs.
pub fn read_key_values(text: &str) -> Result<Vec<(String, String)>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| FormatError::Parse {
                    line: i as u64 + 1,
                    message: format!("expected key=value, got `{l}`"),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::TerminalReason;
    use proptest::prelude::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(0.75), "0.75");
        assert_eq!(fmt_sig(std::f64::consts::PI), "3.14159265");
        assert_eq!(fmt_sig(-0.000123456789123), "-0.000123456789");
        assert_eq!(fmt_sig(3.49e-4), "0.000349");
        assert_eq!(fmt_sig(1e-9), "1e-9");
        assert_eq!(fmt_sig(123456789012.0), "1.23456789e11");
        assert_eq!(fmt_sig(0.99999999999), "1");
        assert_eq!(fmt_sig(1000.0), "1000");
    }

    proptest! {
        #[test]
        fn sig_round_trip(v in -1e6..1e6f64) {
            let back: f64 = fmt_sig(v).parse().unwrap();
            prop_assert!((back - v).abs() <= 1e-8 * v.abs().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn trace_round_trip() {
        let samples = vec![
            OscillationSample { t: 0.0, theta: 0.1 },
            OscillationSample { t: 0.005, theta: 0.0998 },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &samples).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,theta_rad\n"));
        assert_eq!(read_trace(&buf[..]).unwrap(), samples);
    }

    #[test]
    fn malformed_trace_reports_line() {
        let text = "t,theta_rad\n0,0.1\n0.01,abc\n";
        match read_trace(text.as_bytes()) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_trace("time,angle\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn qtable_round_trip_and_shape() {
        let mut t = QTable::pendulum();
        for (i, v) in t.values_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin() * 20.0;
        }
        let mut buf = Vec::new();
        write_qtable(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2161);
        let back = read_qtable(text.as_bytes()).unwrap();
        for (a, b) in back.values().iter().zip(t.values()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-12));
        }

        let truncated: String = text.lines().take(2000).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_qtable(truncated.as_bytes()), Err(FormatError::Shape(_))));
        assert!(matches!(write_qtable(Vec::new(), &QTable::new(3, 2)), Err(FormatError::Shape(_))));
    }

    #[test]
    fn curve_and_fit_formats() {
        let curve = [EpisodeStats {
            steps_survived: 12,
            terminal_reason: TerminalReason::Failure,
            cumulative_reward: 11.0,
        }];
        let mut buf = Vec::new();
        write_curve(&mut buf, &curve).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "episode,steps,reward,terminal\n0,12,11,failure\n");

        let fit = FitResult {
            params: crate::dynamics::PendulumParams::default(),
            theta0: 2.8,
            theta_dot0: 0.0,
            rss: 1.5e-7,
            iterations: 321,
            converged: true,
            warnings: vec![],
        };
        let mut buf = Vec::new();
        write_fit(&mut buf, &fit).unwrap();
        let kv = read_key_values(&String::from_utf8(buf).unwrap()).unwrap();
        let keys: Vec<_> = kv.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["I", "b", "theta0", "theta_dot0", "rss", "converged", "iterations"]);
        assert_eq!(kv[5].1, "true");
    }
}
