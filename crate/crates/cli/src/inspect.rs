//! `inspect`: a short human-readable description of one artifact.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;
use tactsort::formats::{decode_frame, FRAME_MAGIC};
use tactsort::simworld::{catalog, Scenario};

pub fn run(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("file not found: {}", path.display());
    }
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(&FRAME_MAGIC) {
        return frame(&bytes, path);
    }
    let text = String::from_utf8(bytes).with_context(|| format!("{} is neither a frame nor text", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => lines(&text),
        Some("toml") => scenario(&text, path),
        _ => json(&text, path),
    }
}

fn frame(bytes: &[u8], path: &Path) -> Result<()> {
    let rec = decode_frame(bytes).with_context(|| format!("decoding {}", path.display()))?;
    let f = &rec.frame;
    let (lo, hi) = f
        .depth
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
    println!("frame {}x{}, fingertip radius {} mm", f.size, f.size, f.fingertip_radius);
    println!(
        "depth plane: {} in [{lo:.4}, {hi:.4}]",
        if rec.depth_normalised { "normalised deformation" } else { "deformation, mm" }
    );
    println!("rgb plane: {}", if f.rgb.is_empty() { "absent" } else { "present" });
    if f.labels.is_empty() {
        println!("labels: absent");
    } else {
        println!("labels (label, pixels): {:?}", f.label_sizes());
    }
    println!("timestamp {} s", rec.timestamp);
    Ok(())
}

fn print_header(v: &Value) {
    if let Some(h) = v.get("header") {
        for k in ["kind", "config_hash", "seed", "schema_version", "tool_version"] {
            if let Some(x) = h.get(k) {
                println!("{k}: {x}");
            }
        }
    }
}

fn json(text: &str, path: &Path) -> Result<()> {
    let v: Value = serde_json::from_str(text).with_context(|| format!("parsing {}", path.display()))?;
    print_header(&v);
    if let Some(samples) = v.get("samples").and_then(Value::as_array) {
        println!("samples: {}", samples.len());
        if let Some(counts) = v.get("per_class_counts").and_then(Value::as_array) {
            for (i, c) in counts.iter().enumerate().filter(|(_, c)| c.as_u64() != Some(0)) {
                println!("  class {:>2} {:<18} {c}", i + 1, catalog::name(i as u8 + 1));
            }
        }
    } else if let Some(kind) = v.get("kind").and_then(Value::as_str) {
        println!("model kind: {kind}");
        println!("input shape: {}", v["input_shape"]);
        if let Some(m) = v.get("metadata") {
            println!("config_hash: {}", m["config_hash"]);
            println!("trained on {} samples, {} iterations", m["train_samples"], m["iterations"]);
        }
    } else if let Some(acc) = v.get("accuracy") {
        println!("accuracy: {acc}");
    } else if let Some(a) = v.get("attempts") {
        println!("attempts: {a}");
        println!("successful grasps: {}", v["successful_grasps"]);
        println!("sorted: {}", v["sorted"]);
    } else if let Some(obj) = v.as_object() {
        println!("fields: {}", obj.keys().cloned().collect::<Vec<_>>().join(", "));
    }
    Ok(())
}

fn lines(text: &str) -> Result<()> {
    let mut rows = text.lines().filter(|l| !l.trim().is_empty());
    let first: Value = serde_json::from_str(rows.next().unwrap_or("{}")).context("parsing header line")?;
    print_header(&first);
    let mut count = 0;
    let mut outcomes: BTreeMap<String, usize> = BTreeMap::new();
    for l in rows {
        count += 1;
        let v: Value = serde_json::from_str(l).with_context(|| format!("parsing line {}", count + 1))?;
        if let Some(k) = v.get("outcome").and_then(|o| o.get("kind").or(Some(o))).and_then(Value::as_str) {
            *outcomes.entry(k.to_string()).or_default() += 1;
        }
    }
    println!("rows: {count}");
    for (k, n) in outcomes {
        println!("  {k}: {n}");
    }
    Ok(())
}

fn scenario(text: &str, path: &Path) -> Result<()> {
    let s = Scenario::from_toml_str(text).with_context(|| format!("parsing scenario {}", path.display()))?;
    println!("scenario {:?}, seed {}", s.name, s.seed);
    println!("{} objects", s.object_count());
    for c in &s.objects {
        println!("  class {:>2} {:<18} x{}", c.class, catalog::name(c.class), c.count);
    }
    Ok(())
}
