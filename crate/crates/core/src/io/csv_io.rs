use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{MagicError, Result};
use crate::math::TimeGrid;
use crate::model::{SampleSeries, GRID_TOLERANCE};
use crate::predict::Imputation;

fn ingest_err(path: &Path, line: u64, message: impl Into<String>) -> MagicError {
    MagicError::Ingest {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| ingest_err(path, 0, e.to_string()))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn column<R: Read>(rdr: &mut csv::Reader<R>, path: &Path, name: &str) -> Result<usize> {
    let headers = rdr.headers().map_err(|e| ingest_err(path, 1, e.to_string()))?;
    headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}') == name)
        .ok_or_else(|| ingest_err(path, 1, format!("missing column '{name}'")))
}

fn parse_f64(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ingest_err(path, line, format!("{what} '{field}' is not a finite number"))),
    }
}

/// Reads `sample_id,time,value` rows. Times are snapped to grid points
/// (within 1e-9); repeated (sample, time) readings are averaged. Samples
/// keep the order of their first row and come back unlabelled.
pub fn read_long_csv(path: &Path, grid: &TimeGrid) -> Result<Vec<SampleSeries>> {
    let mut rdr = open(path)?;
    let (ci, ct, cv) = (
        column(&mut rdr, path, "sample_id")?,
        column(&mut rdr, path, "time")?,
        column(&mut rdr, path, "value")?,
    );
    let mut order: Vec<String> = Vec::new();
    // Per sample: grid index -> (sum, count).
    let mut acc: HashMap<String, Vec<(usize, f64, usize)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ingest_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(ci).unwrap_or("");
        if id.is_empty() {
            return Err(ingest_err(path, line, "empty sample_id"));
        }
        let t = parse_f64(path, line, rec.get(ct).unwrap_or(""), "time")?;
        let v = parse_f64(path, line, rec.get(cv).unwrap_or(""), "value")?;
        let gi = grid.locate(t, GRID_TOLERANCE).ok_or_else(|| {
            ingest_err(
                path,
                line,
                format!("time {t} is not a grid point (tolerance {GRID_TOLERANCE})"),
            )
        })?;
        let entry = acc.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Vec::new()
        });
        match entry.iter_mut().find(|e| e.0 == gi) {
            Some(e) => {
                e.1 += v;
                e.2 += 1;
            }
            None => entry.push((gi, v, 1)),
        }
    }
    let pts = grid.points();
    order
        .into_iter()
        .map(|id| {
            let mut cells = acc.remove(&id).unwrap_or_default();
            cells.sort_by_key(|c| c.0);
            let times = cells.iter().map(|c| pts[c.0]).collect();
            let values = cells.iter().map(|c| c.1 / c.2 as f64).collect();
            SampleSeries::new(id, times, values, None)
        })
        .collect()
}

/// Reads `sample_id,label` rows with labels in {0, 1}.
pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, u8)>> {
    let mut rdr = open(path)?;
    let (ci, cl) = (column(&mut rdr, path, "sample_id")?, column(&mut rdr, path, "label")?);
    let mut out: Vec<(String, u8)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ingest_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(ci).unwrap_or("").to_string();
        let label = match rec.get(cl).unwrap_or("") {
            "0" => 0,
            "1" => 1,
            other => return Err(ingest_err(path, line, format!("label '{other}' is not 0 or 1"))),
        };
        if out.iter().any(|(k, _)| *k == id) {
            return Err(ingest_err(path, line, format!("sample '{id}' labelled twice")));
        }
        out.push((id, label));
    }
    Ok(out)
}

/// Series file plus optional labels file. A label for a sample that has no
/// series rows is an error; series without a label stay unlabelled.
pub fn ingest_long_csv(
    series: &Path,
    labels: Option<&Path>,
    grid: &TimeGrid,
) -> Result<Vec<SampleSeries>> {
    let mut samples = read_long_csv(series, grid)?;
    if let Some(lp) = labels {
        let labels = read_labels_csv(lp)?;
        for (k, (id, label)) in labels.into_iter().enumerate() {
            let s = samples.iter_mut().find(|s| s.id == id).ok_or_else(|| {
                // Header is line 1; the k-th record sits on line k + 2.
                ingest_err(lp, k as u64 + 2, format!("unknown sample_id '{id}'"))
            })?;
            s.label = Some(label);
        }
    }
    Ok(samples)
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn csv_err(e: csv::Error) -> MagicError {
    MagicError::Io(std::io::Error::other(e))
}

pub fn write_long_csv(path: &Path, samples: &[SampleSeries]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["sample_id", "time", "value"]).map_err(csv_err)?;
    for s in samples {
        for (t, v) in s.times.iter().zip(&s.values) {
            w.write_record([s.id.as_str(), &t.to_string(), &v.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv(path: &Path, samples: &[SampleSeries]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["sample_id", "label"]).map_err(csv_err)?;
    for s in samples {
        if let Some(l) = s.label {
            w.write_record([s.id.as_str(), &l.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub class: u8,
    pub probability: f64,
    /// Log class scores used for the MAP decision (absent for baselines).
    pub log_scores: Option<[f64; 2]>,
}

pub fn write_predictions<W: Write>(out: W, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_id", "class", "probability", "log_score0", "log_score1"])
        .map_err(csv_err)?;
    for r in rows {
        let (a, b) = r
            .log_scores
            .map_or((String::new(), String::new()), |s| (s[0].to_string(), s[1].to_string()));
        w.write_record([r.id.clone(), r.class.to_string(), r.probability.to_string(), a, b])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format with one row per grid point of every completed curve.
pub fn write_imputations<W: Write>(
    out: W,
    grid: &TimeGrid,
    rows: &[(SampleSeries, Imputation)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_id", "time", "value", "variance", "observed"])
        .map_err(csv_err)?;
    for (s, imp) in rows {
        for (i, &t) in grid.points().iter().enumerate() {
            let observed = s.times.iter().any(|&u| (u - t).abs() <= GRID_TOLERANCE);
            w.write_record([
                s.id.clone(),
                t.to_string(),
                imp.curve[i].to_string(),
                imp.variance[i].to_string(),
                u8::from(observed).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `time,mean0,mean1,prior0,prior1` for simulated class means.
pub fn write_class_means(
    path: &Path,
    grid: &TimeGrid,
    means: &[DVector<f64>; 2],
    priors: &[DVector<f64>; 2],
) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["time", "mean0", "mean1", "prior0", "prior1"]).map_err(csv_err)?;
    for (i, t) in grid.points().iter().enumerate() {
        w.write_record([
            t.to_string(),
            means[0][i].to_string(),
            means[1][i].to_string(),
            priors[0][i].to_string(),
            priors[1][i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `prior0`/`prior1` columns of a `time,...` file covering every
/// grid point exactly once.
pub fn read_prior_means(path: &Path, grid: &TimeGrid) -> Result<[DVector<f64>; 2]> {
    let mut rdr = open(path)?;
    let (ct, c0, c1) = (
        column(&mut rdr, path, "time")?,
        column(&mut rdr, path, "prior0")?,
        column(&mut rdr, path, "prior1")?,
    );
    let n = grid.len();
    let mut m = [DVector::from_element(n, f64::NAN), DVector::from_element(n, f64::NAN)];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ingest_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let t = parse_f64(path, line, rec.get(ct).unwrap_or(""), "time")?;
        let gi = grid
            .locate(t, GRID_TOLERANCE)
            .ok_or_else(|| ingest_err(path, line, format!("time {t} is not a grid point")))?;
        if !m[0][gi].is_nan() {
            return Err(ingest_err(path, line, format!("time {t} listed twice")));
        }
        m[0][gi] = parse_f64(path, line, rec.get(c0).unwrap_or(""), "prior0")?;
        m[1][gi] = parse_f64(path, line, rec.get(c1).unwrap_or(""), "prior1")?;
    }
    if let Some(i) = (0..n).find(|&i| m[0][i].is_nan()) {
        return Err(ingest_err(path, 0, format!("no prior mean for grid time {}", grid.points()[i])));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn grid() -> TimeGrid {
        TimeGrid::uniform(0.0, 10.0, 11).unwrap()
    }

    #[test]
    fn two_samples() {
        let dir = tempfile::tempdir().unwrap();
        let s = file(&dir, "s.csv", "sample_id,time,value\na,0,1\na,2,2\na,5,3\nb,1,4\nb,3,5\nb,4,6\n");
        let l = file(&dir, "l.csv", "sample_id,label\nb,1\na,0\n");
        let out = ingest_long_csv(&s, Some(&l), &grid()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].id, "a");
        assert_eq!(out[0].times, vec![0.0, 2.0, 5.0]);
        assert_eq!(out[1].times, vec![1.0, 3.0, 4.0]);
        assert_eq!((out[0].label, out[1].label), (Some(0), Some(1)));
    }

    #[test]
    fn duplicates_are_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let s = file(&dir, "s.csv", "sample_id,time,value\na,3,4\na,1,0\na,3,6\n");
        let out = read_long_csv(&s, &grid()).unwrap();
        assert_eq!(out[0].times, vec![1.0, 3.0]);
        assert_eq!(out[0].values, vec![0.0, 5.0]);
    }

    #[test]
    fn columns_may_be_reordered() {
        let dir = tempfile::tempdir().unwrap();
        let s = file(&dir, "s.csv", "value,sample_id,time\n7,a,2\n");
        let out = read_long_csv(&s, &grid()).unwrap();
        assert_eq!(out[0].values, vec![7.0]);
    }

    fn ingest_line(body: &str, labels: Option<&str>) -> (u64, String) {
        let dir = tempfile::tempdir().unwrap();
        let s = file(&dir, "s.csv", body);
        let l = labels.map(|b| file(&dir, "l.csv", b));
        match ingest_long_csv(&s, l.as_deref(), &grid()) {
            Err(MagicError::Ingest { line, message, .. }) => (line, message),
            other => panic!("expected an ingest error, got {other:?}"),
        }
    }

    #[test]
    fn off_grid_time_names_the_line() {
        let (line, msg) = ingest_line("sample_id,time,value\na,1,1\na,2.5,1\n", None);
        assert_eq!(line, 3);
        assert!(msg.contains("grid"));
    }

    #[test]
    fn malformed_inputs_are_diagnosed() {
        assert_eq!(ingest_line("sample_id,time\na,1\n", None).0, 1);
        assert_eq!(ingest_line("sample_id,time,value\na,1,x\n", None).0, 2);
        assert_eq!(ingest_line("sample_id,time,value\na,1,1\na,2\n", None).0, 3);
        assert_eq!(ingest_line("sample_id,time,value\na,1,NaN\n", None).0, 2);
        let ok = "sample_id,time,value\na,1,1\n";
        assert_eq!(ingest_line(ok, Some("sample_id,label\na,2\n")).0, 2);
        assert_eq!(ingest_line(ok, Some("sample_id,label\na,1\nzz,0\n")).0, 3);
        assert_eq!(ingest_line(ok, Some("sample_id,label\na,1\na,0\n")).0, 3);
        assert_eq!(ingest_line(ok, Some("id,label\na,1\n")).0, 1);
    }

    #[test]
    fn missing_file_is_an_ingest_error() {
        let r = read_long_csv(Path::new("/nonexistent/series.csv"), &grid());
        assert!(matches!(r, Err(MagicError::Ingest { .. })));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![
            SampleSeries::new("x", vec![0.0, 4.0], vec![0.1 + 0.2, -1e-300], Some(1)).unwrap(),
            SampleSeries::new("y", vec![10.0], vec![std::f64::consts::PI], Some(0)).unwrap(),
        ];
        let s = dir.path().join("s.csv");
        let l = dir.path().join("l.csv");
        write_long_csv(&s, &samples).unwrap();
        write_labels_csv(&l, &samples).unwrap();
        assert_eq!(ingest_long_csv(&s, Some(&l), &grid()).unwrap(), samples);
    }

    #[test]
    fn prior_means_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let a = DVector::from_fn(11, |i, _| (i as f64).sin());
        let b = -&a;
        let p = dir.path().join("m.csv");
        write_class_means(&p, &g, &[a.clone(), b.clone()], &[b.clone(), a.clone()]).unwrap();
        let back = read_prior_means(&p, &g).unwrap();
        assert_eq!(back, [b, a]);
        let short = file(&dir, "s.csv", "time,prior0,prior1\n0,1,2\n");
        assert!(read_prior_means(&short, &g).is_err());
    }
}
