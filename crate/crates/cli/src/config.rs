//! `key=value` option files.
//!
//! One option per line; blank lines and lines starting with `#` are
//! skipped. Keys are the long flag names without dashes (`trials`,
//! `seed`, `fraction`, `noise`, `condition`, `task`, `learning`, `out`).
//! Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::Path;

pub const KEYS: [&str; 8] = ["trials", "seed", "fraction", "noise", "condition", "task", "learning", "out"];

pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(format!("line {}: unknown key `{k}`", n + 1));
        }
        out.insert(k.to_owned(), v.to_owned());
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}
