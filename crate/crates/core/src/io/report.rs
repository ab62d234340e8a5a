use std::io::{Read, Write};
use std::path::Path;

use crate::error::{MagicError, Result};
use crate::eval::{BenchmarkReport, ProtocolKind, ReportRow};

const HEADER: [&str; 10] = [
    "method",
    "alpha",
    "auc_mean",
    "auc_sd",
    "mse_mean",
    "mse_sd",
    "n_reps",
    "n_failures",
    "feature",
    "runtime_secs",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn protocol_name(p: ProtocolKind) -> &'static str {
    match p {
        ProtocolKind::RepeatedSplit => "repeated-split",
        ProtocolKind::Loocv => "loocv",
        ProtocolKind::NestedMask => "nested-mask",
    }
}

/// CSV table preceded by `# key: value` metadata lines. Empty cells mean
/// "not measured".
pub fn write_report<W: Write>(mut out: W, report: &BenchmarkReport) -> Result<()> {
    writeln!(out, "# protocol: {}", protocol_name(report.protocol))?;
    writeln!(out, "# seed: {}", report.seed)?;
    writeln!(out, "# config: {}", report.config)?;
    for f in &report.failures {
        writeln!(out, "# failure: {}", f.replace('\n', " "))?;
    }
    let mut w = csv::Writer::from_writer(&mut out);
    let err = |e: csv::Error| MagicError::Io(std::io::Error::other(e));
    w.write_record(HEADER).map_err(err)?;
    for r in &report.rows {
        w.write_record([
            r.method.clone(),
            opt(r.alpha),
            opt(r.auc_mean),
            opt(r.auc_sd),
            opt(r.mse_mean),
            opt(r.mse_sd),
            r.n_reps.to_string(),
            r.n_failures.to_string(),
            r.feature.clone(),
            r.runtime_secs.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_to_string(report: &BenchmarkReport) -> Result<String> {
    let mut buf = Vec::new();
    write_report(&mut buf, report)?;
    String::from_utf8(buf).map_err(|e| MagicError::Report(e.to_string()))
}

pub fn parse_report<R: Read>(mut input: R) -> Result<BenchmarkReport> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let bad = |m: String| MagicError::Report(m);
    let mut protocol = None;
    let mut seed = None;
    let mut config = String::new();
    let mut failures = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(meta) = line.strip_prefix("# ") {
            let (key, value) = meta
                .split_once(": ")
                .ok_or_else(|| bad(format!("malformed metadata line '{line}'")))?;
            match key {
                "protocol" => {
                    protocol = Some(match value {
                        "repeated-split" => ProtocolKind::RepeatedSplit,
                        "loocv" => ProtocolKind::Loocv,
                        "nested-mask" => ProtocolKind::NestedMask,
                        other => return Err(bad(format!("unknown protocol '{other}'"))),
                    })
                }
                "seed" => seed = Some(value.parse().map_err(|_| bad(format!("bad seed '{value}'")))?),
                "config" => config = value.to_string(),
                "failure" => failures.push(value.to_string()),
                other => return Err(bad(format!("unknown metadata key '{other}'"))),
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if headers.iter().ne(HEADER) {
        return Err(bad(format!("unexpected header '{}'", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let at = |i: usize| rec.get(i).unwrap_or("");
        let f = |i: usize| -> Result<Option<f64>> {
            match at(i) {
                "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| bad(format!("row {}: '{s}' in column {} is not a number", k + 1, HEADER[i]))),
            }
        };
        let n = |i: usize| -> Result<usize> {
            at(i)
                .parse()
                .map_err(|_| bad(format!("row {}: '{}' in column {} is not a count", k + 1, at(i), HEADER[i])))
        };
        rows.push(ReportRow {
            method: at(0).to_string(),
            alpha: f(1)?,
            auc_mean: f(2)?,
            auc_sd: f(3)?,
            mse_mean: f(4)?,
            mse_sd: f(5)?,
            n_reps: n(6)?,
            n_failures: n(7)?,
            feature: at(8).to_string(),
            runtime_secs: f(9)?.unwrap_or(0.0),
        });
    }
    Ok(BenchmarkReport {
        protocol: protocol.ok_or_else(|| bad("missing '# protocol' line".into()))?,
        seed: seed.ok_or_else(|| bad("missing '# seed' line".into()))?,
        config,
        rows,
        failures,
    })
}

pub fn read_report(path: &Path) -> Result<BenchmarkReport> {
    parse_report(std::fs::File::open(path)?)
}

fn cell(mean: Option<f64>, sd: Option<f64>) -> String {
    match (mean, sd) {
        (Some(m), Some(s)) => format!("{m:.4} ({s:.4})"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "-".into(),
    }
}

/// Human-readable wide table: one line per (feature, missing ratio), AUC
/// then MSE columns per method.
pub fn format_table(report: &BenchmarkReport) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut keys: Vec<(&str, Option<f64>)> = Vec::new();
    for r in &report.rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !keys.contains(&(r.feature.as_str(), r.alpha)) {
            keys.push((&r.feature, r.alpha));
        }
    }
    let w = 18;
    let mut out = format!("{:<20} {:>6}", "feature", "alpha");
    for m in &methods {
        out += &format!(" {:>w$}", format!("AUC {}", m.to_uppercase()));
    }
    for m in &methods {
        out += &format!(" {:>w$}", format!("MSE {}", m.to_uppercase()));
    }
    out.push('\n');
    for (feature, alpha) in keys {
        let alpha_s = alpha.map_or("-".to_string(), |a| format!("{a:.2}"));
        out += &format!("{feature:<20} {alpha_s:>6}");
        let find = |m: &str| {
            report
                .rows
                .iter()
                .find(|r| r.feature == feature && r.alpha == alpha && r.method == m)
        };
        for m in &methods {
            let c = find(m).map_or("-".into(), |r| cell(r.auc_mean, r.auc_sd));
            out += &format!(" {c:>w$}");
        }
        for m in &methods {
            let c = find(m).map_or("-".into(), |r| cell(r.mse_mean, r.mse_sd));
            out += &format!(" {c:>w$}");
        }
        out.push('\n');
    }
    out
}
