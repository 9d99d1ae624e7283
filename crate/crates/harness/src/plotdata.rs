//! Long-format CSV export for external plotting: every metrics.csv under
//! a directory tree becomes (run, seed, env_steps, metric, value) rows.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

pub fn collect_long_format(root: &Path) -> anyhow::Result<String> {
    let mut out = String::from("run,seed,env_steps,metric,value\n");
    let mut files = Vec::new();
    walk(root, &mut files)?;
    files.sort();
    for path in files {
        let rel = path.strip_prefix(root).unwrap_or(&path);
        let seed_dir = rel
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or("");
        let seed = seed_dir.strip_prefix("seed_").unwrap_or(seed_dir);
        let run = rel
            .parent()
            .and_then(|p| p.parent())
            .map(|p| p.to_string_lossy().replace('/', ":"))
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".to_string());

        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let Some(header) = lines.next() else { continue };
        let columns: Vec<&str> = header.split(',').collect();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            let Some(env_steps) = fields.first() else { continue };
            for (name, value) in columns.iter().zip(&fields).skip(1) {
                if value.is_empty() {
                    continue;
                }
                let _ = writeln!(out, "{run},{seed},{env_steps},{name},{value}");
            }
        }
    }
    Ok(out)
}

fn walk(dir: &Path, files: &mut Vec<std::path::PathBuf>) -> anyhow::Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, files)?;
        } else if path.file_name().map(|n| n == "metrics.csv").unwrap_or(false) {
            files.push(path);
        }
    }
    Ok(())
}
