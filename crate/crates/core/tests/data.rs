use std::collections::HashSet;
use std::path::Path;
use vmident_core::data::*;

fn short_synth(length: usize) -> SynthConfig {
    SynthConfig {
        length,
        ..SynthConfig::default()
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) {
    let mut text = header.join(",") + "\n";
    for r in rows {
        text += &(r.join(",") + "\n");
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn synthetic_traces_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let traces = short_synth(100).synthesize(11).unwrap();
    let mut entries = Vec::new();
    for t in &traces {
        let path = dir.path().join(format!("{}.csv", t.vm_id));
        write_trace_csv(t, &path).unwrap();
        entries.push(ManifestEntry {
            path,
            vm_id: t.vm_id.clone(),
            class_label: t.class_label,
        });
    }
    let manifest = dir.path().join("manifest.csv");
    write_manifest(&entries, &manifest).unwrap();
    let back = ingest_csv(&manifest).unwrap();
    assert_eq!(back, traces);
    let labels: Vec<usize> = back.iter().map(|t| t.class_label).collect();
    assert_eq!(labels, [0, 0, 0, 0, 1, 1, 1, 1]);
}

#[test]
fn shuffled_columns_are_reordered() {
    let dir = tempfile::tempdir().unwrap();
    let mut header: Vec<&str> = METRIC_NAMES.to_vec();
    header.reverse();
    let rows: Vec<Vec<String>> = (0..3)
        .map(|t| (0..16).rev().map(|j| format!("{}", t * 100 + j)).collect())
        .collect();
    let path = dir.path().join("rev.csv");
    write_csv(&path, &header, &rows);
    let trace = read_trace_csv(&path, "vm", 1).unwrap();
    assert_eq!(trace.metric_names, METRIC_NAMES);
    assert_eq!(trace.row(2), (0..16).map(|j| (200 + j) as f64).collect::<Vec<_>>().as_slice());
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let header: Vec<&str> = METRIC_NAMES.iter().copied().filter(|n| *n != "CacheMiss").collect();
    let path = dir.path().join("partial.csv");
    write_csv(&path, &header, &[vec!["1".to_string(); 15]]);
    let err = read_trace_csv(&path, "vm", 0).unwrap_err();
    assert!(err.to_string().contains("CacheMiss"), "{err}");
    assert!(err.is_data_error());
}

#[test]
fn bad_values_report_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let mut rows = vec![vec!["1.5".to_string(); 16]; 3];
    rows[1][4] = "abc".into();
    write_csv(&path, &METRIC_NAMES, &rows);
    let msg = read_trace_csv(&path, "vm", 0).unwrap_err().to_string();
    assert!(msg.contains("bad.csv") && msg.contains(":3:"), "{msg}");

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(read_trace_csv(&empty, "vm", 0).is_err());
}

#[test]
fn nan_rows_are_dropped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nan.csv");
    let mut rows = vec![vec!["2".to_string(); 16]; 5];
    rows[3][0] = "NaN".into();
    write_csv(&path, &METRIC_NAMES, &rows);
    let trace = read_trace_csv(&path, "vm", 0).unwrap();
    assert_eq!(trace.len(), 4);
    assert_eq!(trace.dropped_rows, 1);
}

fn trace_of_len(t: usize) -> VmTrace {
    let names: Vec<String> = METRIC_NAMES.iter().map(|s| s.to_string()).collect();
    VmTrace::new("vm", 0, names, (0..t * 16).map(|v| v as f64).collect()).unwrap()
}

#[test]
fn window_counts() {
    assert_eq!(window_trace(&trace_of_len(1000), 64, false).unwrap().len(), 15);
    assert_eq!(window_trace(&trace_of_len(1000), 128, true).unwrap().len(), 28);
    for overlap in [false, true] {
        assert_eq!(window_trace(&trace_of_len(128), 128, overlap).unwrap().len(), 1);
    }
    assert!(window_trace(&trace_of_len(10), 16, false).unwrap().is_empty());
    let policy = OverlapPolicy::default();
    assert!(!policy.uses_overlap(64));
    assert!(policy.uses_overlap(128));
}

#[test]
fn windows_tile_without_gaps_and_stay_inside() {
    let trace = trace_of_len(300);
    for (w, overlap) in [(16, false), (128, true), (256, true)] {
        let windows = window_trace(&trace, w, overlap).unwrap();
        let stride = window_stride(w, overlap).unwrap();
        for (k, win) in windows.iter().enumerate() {
            assert_eq!(win.origin.start, k * stride);
            assert!(win.origin.start + w <= 300);
            assert_eq!(win.values[..], trace.samples()[win.origin.start * 16..(win.origin.start + w) * 16]);
        }
        let last_end = windows.last().unwrap().origin.start + w;
        assert!(300 - last_end < stride, "window {w} leaves a full stride uncovered");
    }
}

fn mean_var(windows: &[WindowSample], metric: usize) -> (f64, f64) {
    let vals: Vec<f64> = windows
        .iter()
        .flat_map(|w| w.values.chunks(w.metrics).map(move |row| row[metric]))
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    (mean, vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

#[test]
fn normalization_uses_training_statistics_only() {
    let traces = short_synth(600).synthesize(5).unwrap();
    let raw = {
        let (windows, _) = window_traces(&traces, 8, false).unwrap();
        partition(windows, SplitFractions::default(), 3, SplitMode::Window).unwrap()
    };
    let split = prepare_dataset(&traces, 8, &DataConfig::default(), 3).unwrap();
    let refit = fit_normalizer(&raw.train).unwrap();
    assert_eq!(refit, split.normalizer);
    for m in 0..16 {
        let (mean, var) = mean_var(&split.train, m);
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9, "metric {m}: {mean} {var}");
    }
    // validation and test were transformed with the training mean/std, not their own
    for (raw_part, part) in [(&raw.validation, &split.validation), (&raw.test, &split.test)] {
        assert_ne!(fit_normalizer(raw_part).unwrap(), split.normalizer);
        for (r, n) in raw_part.iter().zip(part.iter()) {
            for (i, (a, b)) in r.values.iter().zip(&n.values).enumerate() {
                let m = i % 16;
                let expected = (a - split.normalizer.mean[m]) / split.normalizer.std[m];
                assert!((expected - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn split_example_and_balance() {
    let traces = short_synth(500).synthesize(8).unwrap();
    let (mut windows, _) = window_traces(&traces, 4, false).unwrap();
    // unbalance: keep 120 class-0 and 80 class-1 windows
    let mut kept = [0, 0];
    windows.retain(|w| {
        kept[w.label] += 1;
        kept[w.label] <= [120, 80][w.label]
    });
    let split = balance_and_split(windows, SplitFractions::default(), 4).unwrap();
    assert_eq!([split.train.len(), split.validation.len(), split.test.len()], [112, 32, 16]);
    for part in [&split.train, &split.validation, &split.test] {
        let ones = part.iter().filter(|w| w.label == 1).count();
        assert!((part.len() - ones).abs_diff(ones) <= 1);
    }
    let ids: HashSet<(String, usize)> = split
        .train
        .iter()
        .chain(&split.validation)
        .chain(&split.test)
        .map(|w| (w.origin.vm_id.clone(), w.origin.start))
        .collect();
    assert_eq!(ids.len(), 160, "a window appears in more than one split");
}

#[test]
fn per_vm_split_does_not_share_timesteps() {
    let traces = short_synth(2016).synthesize(2).unwrap();
    let config = DataConfig {
        split_mode: SplitMode::PerVm,
        ..DataConfig::default()
    };
    let split = prepare_dataset(&traces, 128, &config, 6).unwrap();
    let span = |ws: &[WindowSample], vm: &str| {
        ws.iter()
            .filter(|w| w.origin.vm_id == vm)
            .map(|w| (w.origin.start, w.origin.start + w.width))
            .fold((usize::MAX, 0), |(lo, hi), (s, e)| (lo.min(s), hi.max(e)))
    };
    for t in &traces {
        let tr = span(&split.train, &t.vm_id);
        let va = span(&split.validation, &t.vm_id);
        let te = span(&split.test, &t.vm_id);
        if tr.1 > 0 && va.1 > 0 {
            assert!(tr.1 <= va.0);
        }
        if va.1 > 0 && te.1 > 0 {
            assert!(va.1 <= te.0);
        }
        if tr.1 > 0 && te.1 > 0 {
            assert!(tr.1 <= te.0);
        }
    }
}

#[test]
fn per_vm_split_reports_empty_segment() {
    let traces = short_synth(1000).synthesize(2).unwrap();
    let config = DataConfig {
        split_mode: SplitMode::PerVm,
        ..DataConfig::default()
    };
    let err = prepare_dataset(&traces, 128, &config, 6).unwrap_err().to_string();
    assert!(err.contains("test segment"), "{err}");
}

#[test]
fn synthetic_separability_extremes() {
    let mut config = short_synth(288);
    config.separability = 0.0;
    let a = config.effective_archetypes();
    assert_eq!(a[0], a[1]);
    config.separability = 1.0;
    config.noise_scale = 0.0;
    let traces = config.synthesize(1).unwrap();
    // with no noise, the class means of at least 8 metrics lie far apart
    let mean = |class: usize, m: usize| {
        let vals: Vec<f64> = traces.iter().filter(|t| t.class_label == class).flat_map(|t| t.column(m)).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let separated = (0..16)
        .filter(|&m| {
            let (x, y) = (&config.effective_archetypes()[0][m], &config.effective_archetypes()[1][m]);
            (mean(0, m) - mean(1, m)).abs() > x.amplitude + y.amplitude
        })
        .count();
    assert!(separated >= 8, "{separated}");
}

#[test]
fn synth_config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.toml");
    let config = SynthConfig {
        separability: 0.25,
        ..SynthConfig::default()
    };
    std::fs::write(&path, config.to_toml_string()).unwrap();
    assert_eq!(SynthConfig::from_path(&path).unwrap(), config);
    std::fs::write(&path, "vms_per_class = 0\n").unwrap();
    assert!(SynthConfig::from_path(&path).is_err());
}
