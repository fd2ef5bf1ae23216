use super::{VmTrace, CLASS_NAMES, METRIC_NAMES};
use crate::par::map_slice;
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// One `(csv_path, vm_id, class)` record of a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub vm_id: String,
    pub class_label: usize,
}

/// Accepts a class name (`web-server`, `sql-server`, or the short `web` /
/// `sql`) or a numeric label.
pub fn parse_class(s: &str) -> Option<usize> {
    let s = s.trim().to_ascii_lowercase();
    if let Some(i) = CLASS_NAMES.iter().position(|n| *n == s) {
        return Some(i);
    }
    match s.as_str() {
        "web" => Some(0),
        "sql" => Some(1),
        _ => s.parse().ok(),
    }
}

/// Reads a manifest: comma-separated `path,vm_id,class` lines. Blank lines
/// and lines starting with `#` are skipped, as is an optional
/// `path,vm_id,class` header. Relative paths resolve against the manifest's
/// directory.
pub fn read_manifest(manifest_path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if entries.is_empty() && fields == ["path", "vm_id", "class"] {
            continue;
        }
        let [path, vm_id, class] = fields[..] else {
            return Err(Error::data(
                manifest_path,
                line_no,
                format!("expected `path,vm_id,class`, found {} field(s)", fields.len()),
            ));
        };
        let class_label = parse_class(class).ok_or_else(|| {
            Error::data(manifest_path, line_no, format!("unknown class {class:?}"))
        })?;
        let p = Path::new(path);
        entries.push(ManifestEntry {
            path: if p.is_absolute() { p.to_path_buf() } else { base.join(p) },
            vm_id: vm_id.to_string(),
            class_label,
        });
    }
    if entries.is_empty() {
        return Err(Error::data(manifest_path, 0, "manifest lists no traces"));
    }
    Ok(entries)
}

/// Reads every trace listed in a manifest, in manifest order.
pub fn ingest_csv(manifest_path: &Path) -> Result<Vec<VmTrace>> {
    let entries = read_manifest(manifest_path)?;
    map_slice(&entries, |e| read_trace_csv(&e.path, &e.vm_id, e.class_label))
        .into_iter()
        .collect()
}

/// Reads one trace CSV whose header is a permutation of the canonical metric
/// names. Columns are reordered to canonical order; rows containing NaN are
/// dropped and counted.
pub fn read_trace_csv(path: &Path, vm_id: &str, class_label: usize) -> Result<VmTrace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::data(path, 1, "empty file"));
    }

    let mut column_of = [usize::MAX; METRIC_NAMES.len()];
    for (col, name) in headers.iter().enumerate() {
        let Some(m) = METRIC_NAMES.iter().position(|n| *n == name) else {
            return Err(Error::data(path, 1, format!("unknown metric column {name:?}")));
        };
        if column_of[m] != usize::MAX {
            return Err(Error::data(path, 1, format!("duplicate metric column {name:?}")));
        }
        column_of[m] = col;
    }
    if let Some(m) = column_of.iter().position(|&c| c == usize::MAX) {
        return Err(Error::data(
            path,
            1,
            format!("missing metric column {:?}", METRIC_NAMES[m]),
        ));
    }

    let mut samples = Vec::new();
    let mut dropped = 0;
    let mut record = csv::StringRecord::new();
    let mut row = [0.0f64; METRIC_NAMES.len()];
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(path, e)),
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::data(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (m, &col) in column_of.iter().enumerate() {
            let field = &record[col];
            row[m] = field.parse::<f64>().map_err(|_| {
                Error::data(
                    path,
                    line,
                    format!("cannot parse {field:?} in column {:?}", METRIC_NAMES[m]),
                )
            })?;
        }
        if row.iter().any(|v| v.is_nan()) {
            dropped += 1;
            continue;
        }
        samples.extend_from_slice(&row);
    }
    if samples.is_empty() {
        return Err(Error::data(path, 2, "no data rows"));
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} row(s) containing NaN", path.display());
    }
    let names = METRIC_NAMES.iter().map(|s| s.to_string()).collect();
    let mut trace = VmTrace::new(vm_id, class_label, names, samples)?;
    trace.dropped_rows = dropped;
    Ok(trace)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(path, line, format!("{other:?}")),
    }
}

/// Writes a trace as CSV with its metric names as header.
pub fn write_trace_csv(trace: &VmTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", trace.metric_names.join(",")).map_err(io)?;
    let mut line = String::new();
    for t in 0..trace.len() {
        line.clear();
        for (i, v) in trace.row(t).iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes a manifest with paths relative to `base` where possible.
pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = String::from("path,vm_id,class\n");
    for e in entries {
        let p = e.path.strip_prefix(base).unwrap_or(&e.path);
        let class = CLASS_NAMES
            .get(e.class_label)
            .map(|s| s.to_string())
            .unwrap_or_else(|| e.class_label.to_string());
        out.push_str(&format!("{},{},{}\n", p.display(), e.vm_id, class));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
