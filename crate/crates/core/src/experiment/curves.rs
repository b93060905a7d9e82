use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::ExperimentError;

pub const CURVE_HEADER: &str = "iteration,cost,smoothed_cost";

/// Mean and population standard deviation of the last `⌈τM⌉` costs of a
/// trace of length `M`.
pub fn tau_sharp_ratio(costs: &[f64], tau: f64) -> Result<(f64, f64), ExperimentError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(ExperimentError::Config(format!("tau {tau} not in (0, 1]")));
    }
    let m = costs.len();
    let k = (tau * m as f64).ceil() as usize;
    if m == 0 || k == 0 {
        return Err(ExperimentError::Config("cost trace is empty".into()));
    }
    let tail = &costs[m - k..];
    let mean = tail.iter().sum::<f64>() / k as f64;
    let var = tail.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / k as f64;
    Ok((mean, var.sqrt()))
}

/// Means over consecutive windows of `window` values, each repeated across
/// its window. A short final window averages what it has.
pub fn smooth(costs: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    costs
        .chunks(window)
        .flat_map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            std::iter::repeat_n(m, c.len())
        })
        .collect()
}

pub fn write_curves(out: &mut impl Write, costs: &[f64], window: usize) -> io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for (i, (c, s)) in costs.iter().zip(smooth(costs, window)).enumerate() {
        writeln!(out, "{i},{c},{s}")?;
    }
    Ok(())
}

/// Writes the curve CSV to `path`, creating parent directories.
pub fn emit_curves(costs: &[f64], path: impl AsRef<Path>, window: usize) -> Result<(), ExperimentError> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_curves(&mut w, costs, window)?;
    w.flush()?;
    Ok(())
}

/// One parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    pub cost: f64,
    pub smoothed_cost: f64,
}

pub fn read_curves(path: impl AsRef<Path>) -> Result<Vec<CurveRow>, ExperimentError> {
    let bad = |m: String| ExperimentError::Format(m);
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    match lines.next() {
        Some(Ok(h)) if h == CURVE_HEADER => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(format!("bad row {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        rows.push(CurveRow {
            iteration: f[0].parse().map_err(|e| bad(format!("{:?}: {e}", f[0])))?,
            cost: num(f[1])?,
            smoothed_cost: num(f[2])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_trace() {
        let (m, s) = tau_sharp_ratio(&[0.3; 50], 0.5).unwrap();
        assert!((m - 0.3).abs() < 1e-15 && s < 1e-15);
    }

    #[test]
    fn tau_one_is_whole_trace() {
        let (m, s) = tau_sharp_ratio(&[1.0, 3.0], 1.0).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
        let (m, _) = tau_sharp_ratio(&[9.0, 1.0, 3.0], 0.5).unwrap();
        assert_eq!(m, 2.0);
        assert!(tau_sharp_ratio(&[], 0.5).is_err());
        assert!(tau_sharp_ratio(&[1.0], 0.0).is_err());
    }

    #[test]
    fn smoothing_windows() {
        let costs: Vec<f64> = (0..20).map(f64::from).collect();
        let s = smooth(&costs, 10);
        let mut distinct = s.clone();
        distinct.dedup();
        assert_eq!(distinct, vec![4.5, 14.5]);
        assert_eq!(smooth(&costs, 1), costs);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.csv");
        let costs = vec![0.1, 1.0 / 3.0, 2.5e-17, 7.0];
        emit_curves(&costs, &p, 2).unwrap();
        let rows = read_curves(&p).unwrap();
        assert_eq!(rows.iter().map(|r| r.cost).collect::<Vec<_>>(), costs);
        assert_eq!(rows[3].iteration, 3);
        assert_eq!(rows[0].smoothed_cost, (0.1 + 1.0 / 3.0) / 2.0);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("iteration,cost,smoothed_cost\n0,0.1,"));
    }

    proptest! {
        #[test]
        fn smaller_tau_is_smaller_on_decreasing_trace(
            steps in proptest::collection::vec(1e-3f64..1.0, 4..200),
            t1 in 0.05f64..1.0,
            t2 in 0.05f64..1.0,
        ) {
            let mut c = 100.0;
            let costs: Vec<f64> = steps.iter().map(|s| { c -= s; c }).collect();
            let m = costs.len() as f64;
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assume!((lo * m).ceil() < (hi * m).ceil());
            prop_assert!(tau_sharp_ratio(&costs, lo).unwrap().0 < tau_sharp_ratio(&costs, hi).unwrap().0);
        }
    }
}
