//! CSV files exchanged between the command-line steps.
//!
//! Every file has one header row naming each column with its unit, a time
//! column in seconds first, and comma-separated values printed with the
//! shortest representation that parses back to the same `f64`. Rates and
//! angles are written in degrees.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::chain::ChainState;
use crate::error::{Error, Result};
use crate::mhe::{EstimatorRun, RelativeErrors};
use crate::observability::ObservabilityVerdict;
use crate::quat::{UnitQuaternion, Vec3};
use crate::sim::{GyroRecord, RateProjections, TrajectorySample, DEG};

fn quat_columns(prefix: &str) -> Vec<String> {
    ["w", "x", "y", "z"].iter().map(|c| format!("{prefix}_{c}")).collect()
}

fn rate_columns(prefix: &str) -> Vec<String> {
    ["x", "y", "z"].iter().map(|c| format!("{prefix}_{c}_deg_s")).collect()
}

fn columns(parts: &[Vec<String>]) -> Vec<String> {
    let mut out = vec!["t_s".to_string()];
    for p in parts {
        out.extend(p.iter().cloned());
    }
    out
}

pub fn trajectory_columns() -> Vec<String> {
    columns(&[
        quat_columns("q_i"),
        quat_columns("q_j"),
        quat_columns("q_k"),
        rate_columns("omega_i"),
        rate_columns("omega_j"),
        rate_columns("omega_k"),
    ])
}

pub fn measurement_columns() -> Vec<String> {
    columns(&[rate_columns("y_i"), rate_columns("y_k")])
}

pub fn estimate_columns() -> Vec<String> {
    let mut c = columns(&[quat_columns("q_i"), quat_columns("q_j"), quat_columns("q_k")]);
    c.extend(["window_len", "iterations", "converged", "singular", "cost"].map(String::from));
    c
}

pub fn error_columns() -> Vec<String> {
    columns(&[vec!["phi_ji_deg".into(), "phi_ki_deg".into()]])
}

pub fn projection_columns() -> Vec<String> {
    columns(&[["omega_perp", "omega_nonperp", "joint_i", "joint_k"]
        .iter()
        .map(|c| format!("{c}_deg_s"))
        .collect()])
}

pub fn verdict_columns() -> Vec<String> {
    columns(&[vec![
        "omega_perp_mag_deg_s".into(),
        "omega_nonperp_mag_deg_s".into(),
        "threshold_deg_s".into(),
        "observable".into(),
    ]])
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn push_quat(row: &mut Vec<String>, q: UnitQuaternion) {
    row.extend(q.to_array().map(num));
}

fn push_deg(row: &mut Vec<String>, v: Vec3) {
    row.extend(v.to_array().map(|c| num(c / DEG)));
}

fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let csv_err = |e: csv::Error| Error::Csv { path: path.to_path_buf(), message: e.to_string() };
    let file = File::create(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    let mut file = w.into_inner().map_err(|e| io(e.into_error()))?;
    file.flush().map_err(io)
}

/// Reads a numeric table with the given header; names the last complete row
/// when a row is short or unparsable.
fn read_table(path: &Path, header: &[String]) -> Result<Vec<Vec<f64>>> {
    let fail = |message: String| Error::Csv { path: path.to_path_buf(), message };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let mut records = r.records();
    let found = match records.next() {
        Some(h) => h.map_err(|e| fail(e.to_string()))?,
        None => return Err(fail("empty file, expected a header row".into())),
    };
    if found.iter().ne(header.iter().map(String::as_str)) {
        return Err(fail(format!(
            "schema mismatch: expected columns [{}], found [{}]",
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let last_valid = |rows: &Vec<Vec<f64>>| match rows.last() {
        Some(r) => format!("last valid row is {} (t = {} s)", rows.len(), r[0]),
        None => "no valid data row".to_string(),
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in records {
        let line = rows.len() + 2;
        let rec = rec.map_err(|e| fail(format!("line {line}: {e}; {}", last_valid(&rows))))?;
        if rec.len() != header.len() {
            return Err(fail(format!(
                "line {line} has {} of {} fields (truncated?); {}",
                rec.len(),
                header.len(),
                last_valid(&rows)
            )));
        }
        let mut values = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(header) {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(fail(format!(
                        "line {line}, column `{name}`: cannot read `{field}` as a finite number; {}",
                        last_valid(&rows)
                    )))
                }
            }
        }
        rows.push(values);
    }
    Ok(rows)
}

fn quat_at(row: &[f64], at: usize, path: &Path, line: usize) -> Result<UnitQuaternion> {
    UnitQuaternion::from_array([row[at], row[at + 1], row[at + 2], row[at + 3]]).ok_or_else(|| Error::Csv {
        path: path.to_path_buf(),
        message: format!("line {line}: zero quaternion"),
    })
}

fn deg_at(row: &[f64], at: usize) -> Vec3 {
    Vec3::new(row[at], row[at + 1], row[at + 2]) * DEG
}

pub fn write_trajectory(path: &Path, samples: &[TrajectorySample]) -> Result<()> {
    write_table(
        path,
        &trajectory_columns(),
        samples.iter().map(|s| {
            let mut row = vec![num(s.t)];
            push_quat(&mut row, s.truth.q_i);
            push_quat(&mut row, s.truth.q_j);
            push_quat(&mut row, s.truth.q_k);
            push_deg(&mut row, s.omega_i_bi);
            push_deg(&mut row, s.omega_j_bj);
            push_deg(&mut row, s.omega_k_bk);
            row
        }),
    )
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectorySample>> {
    read_table(path, &trajectory_columns())?
        .iter()
        .enumerate()
        .map(|(n, r)| {
            Ok(TrajectorySample {
                t: r[0],
                truth: ChainState::new(quat_at(r, 1, path, n + 2)?, quat_at(r, 5, path, n + 2)?, quat_at(r, 9, path, n + 2)?),
                omega_i_bi: deg_at(r, 13),
                omega_j_bj: deg_at(r, 16),
                omega_k_bk: deg_at(r, 19),
            })
        })
        .collect()
}

pub fn write_measurements(path: &Path, records: &[GyroRecord]) -> Result<()> {
    write_table(
        path,
        &measurement_columns(),
        records.iter().map(|m| {
            let mut row = vec![num(m.t)];
            push_deg(&mut row, m.y_i_bi);
            push_deg(&mut row, m.y_k_bk);
            row
        }),
    )
}

pub fn read_measurements(path: &Path) -> Result<Vec<GyroRecord>> {
    Ok(read_table(path, &measurement_columns())?
        .iter()
        .map(|r| GyroRecord { t: r[0], y_i_bi: deg_at(r, 1), y_k_bk: deg_at(r, 4) })
        .collect())
}

pub fn write_estimates(path: &Path, run: &EstimatorRun) -> Result<()> {
    write_table(
        path,
        &estimate_columns(),
        run.estimates.iter().zip(&run.steps).map(|(x, s)| {
            let mut row = vec![num(s.t)];
            push_quat(&mut row, x.q_i);
            push_quat(&mut row, x.q_j);
            push_quat(&mut row, x.q_k);
            row.extend([
                s.window_len.to_string(),
                s.iterations.to_string(),
                u8::from(s.converged).to_string(),
                u8::from(s.singular).to_string(),
                num(s.cost),
            ]);
            row
        }),
    )
}

/// Estimated states with their solver reports.
pub fn read_estimates(path: &Path) -> Result<EstimatorRun> {
    let rows = read_table(path, &estimate_columns())?;
    let mut run = EstimatorRun { estimates: Vec::with_capacity(rows.len()), steps: Vec::with_capacity(rows.len()) };
    for (n, r) in rows.iter().enumerate() {
        run.estimates.push(ChainState::new(
            quat_at(r, 1, path, n + 2)?,
            quat_at(r, 5, path, n + 2)?,
            quat_at(r, 9, path, n + 2)?,
        ));
        run.steps.push(crate::mhe::StepReport {
            t: r[0],
            window_len: r[13] as usize,
            iterations: r[14] as usize,
            converged: r[15] != 0.0,
            singular: r[16] != 0.0,
            cost: r[17],
        });
    }
    Ok(run)
}

pub fn write_errors(path: &Path, times: &[f64], errors: &[RelativeErrors]) -> Result<()> {
    if times.len() != errors.len() {
        return Err(Error::invalid("errors", "one time per error row required"));
    }
    write_table(
        path,
        &error_columns(),
        times.iter().zip(errors).map(|(t, e)| vec![num(*t), num(e.phi_ji / DEG), num(e.phi_ki / DEG)]),
    )
}

/// Times and errors, rad.
pub fn read_errors(path: &Path) -> Result<(Vec<f64>, Vec<RelativeErrors>)> {
    let rows = read_table(path, &error_columns())?;
    Ok(rows
        .iter()
        .map(|r| (r[0], RelativeErrors { phi_ji: r[1] * DEG, phi_ki: r[2] * DEG }))
        .unzip())
}

pub fn write_projections(path: &Path, p: &[RateProjections]) -> Result<()> {
    write_table(
        path,
        &projection_columns(),
        p.iter().map(|p| {
            [p.t, p.perp / DEG, p.non_perp / DEG, p.joint_i / DEG, p.joint_k / DEG]
                .map(num)
                .to_vec()
        }),
    )
}

pub fn write_verdicts(path: &Path, v: &[ObservabilityVerdict]) -> Result<()> {
    write_table(
        path,
        &verdict_columns(),
        v.iter().map(|v| {
            vec![
                num(v.t),
                num(v.omega_perp_mag / DEG),
                num(v.omega_nonperp_mag / DEG),
                num(v.threshold / DEG),
                u8::from(v.observable).to_string(),
            ]
        }),
    )
}

/// Times and verdicts of a verdict file.
pub fn read_verdicts(path: &Path) -> Result<Vec<(f64, bool)>> {
    Ok(read_table(path, &verdict_columns())?.iter().map(|r| (r[0], r[4] != 0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainConfig;
    use crate::sim::{generate, measure, Movement, MotionParams, NoiseSpec};

    fn samples() -> Vec<TrajectorySample> {
        generate(Movement::Random, &ChainConfig::default(), &MotionParams::default(), 0.5, 0.01, 4).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-15 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        let s = samples();
        write_trajectory(&path, &s).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.len(), s.len());
        for (a, b) in s.iter().zip(&back) {
            assert_eq!(a.t, b.t);
            for (qa, qb) in [(a.truth.q_i, b.truth.q_i), (a.truth.q_j, b.truth.q_j), (a.truth.q_k, b.truth.q_k)] {
                for (x, y) in qa.to_array().iter().zip(qb.to_array()) {
                    assert!(close(*x, y));
                }
            }
            for (va, vb) in [(a.omega_i_bi, b.omega_i_bi), (a.omega_j_bj, b.omega_j_bj), (a.omega_k_bk, b.omega_k_bk)] {
                for c in 0..3 {
                    assert!(close(va[c], vb[c]), "{} vs {}", va[c], vb[c]);
                }
            }
        }
    }

    #[test]
    fn measurement_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = measure(&samples(), &NoiseSpec::standard(9)).unwrap();
        write_measurements(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_s,y_i_x_deg_s,y_i_y_deg_s,y_i_z_deg_s,y_k_x_deg_s"));
        assert_eq!(text.lines().count(), m.len() + 1);
        let back = read_measurements(&path).unwrap();
        for (a, b) in m.iter().zip(&back) {
            assert_eq!(a.t, b.t);
            for c in 0..3 {
                assert!(close(a.y_i_bi[c], b.y_i_bi[c]) && close(a.y_k_bk[c], b.y_k_bk[c]));
            }
        }
    }

    #[test]
    fn truncated_file_names_last_valid_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = measure(&samples(), &NoiseSpec::noiseless()).unwrap();
        write_measurements(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // cut in the middle of the 11th data row
        let keep: Vec<&str> = text.lines().take(12).collect();
        let last = keep[11];
        let cut = format!("{}\n{}", keep[..11].join("\n"), &last[..last.len() / 2]);
        std::fs::write(&path, cut).unwrap();
        let msg = read_measurements(&path).unwrap_err().to_string();
        assert!(msg.contains("last valid row is 10"), "{msg}");
        assert!(msg.contains("t = 0.09"), "{msg}");
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_measurements(&path, &measure(&samples(), &NoiseSpec::noiseless()).unwrap()).unwrap();
        let msg = read_trajectory(&path).unwrap_err().to_string();
        assert!(msg.contains("schema mismatch"), "{msg}");
        std::fs::write(&path, "").unwrap();
        assert!(read_measurements(&path).is_err());
        std::fs::write(&path, format!("{}\n0.0,1,2,x,4,5,6\n", measurement_columns().join(","))).unwrap();
        let msg = read_measurements(&path).unwrap_err().to_string();
        assert!(msg.contains("y_i_z_deg_s") && msg.contains("no valid data row"), "{msg}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let e = read_measurements(Path::new("/nonexistent/dir/m.csv")).unwrap_err();
        assert!(matches!(e, Error::Io { .. }));
    }
}
