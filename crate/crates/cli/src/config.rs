//! Flat `key = value` run files for `mc`.

use std::path::{Path, PathBuf};

use crate::commands::CliError;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct McConfig {
    pub design: Option<String>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// Parses `key = value` lines. Blank lines and `#` comments are ignored;
/// unknown keys are errors.
pub fn parse(text: &str) -> Result<McConfig, String> {
    let mut cfg = McConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| format!("line {}: {what} `{value}`", i + 1);
        match key {
            "design" => cfg.design = Some(value.to_string()),
            "replications" => cfg.replications = Some(value.parse().map_err(|_| bad("bad replications"))?),
            "seed" => cfg.seed = Some(value.parse().map_err(|_| bad("bad seed"))?),
            "output_dir" => cfg.output_dir = Some(PathBuf::from(value)),
            other => return Err(format!("line {}: unknown key `{other}`", i + 1)),
        }
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<McConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text).map_err(CliError::Usage)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let c = parse("# run\ndesign = table5\nreplications=300\nseed = 9 # trailing\noutput_dir = out/t5\n").unwrap();
        assert_eq!(c.design.as_deref(), Some("table5"));
        assert_eq!(c.replications, Some(300));
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.output_dir, Some(PathBuf::from("out/t5")));
    }

    #[test]
    fn rejects_unknown_keys_and_junk() {
        assert!(parse("reps = 3").is_err());
        assert!(parse("design table2").is_err());
        assert!(parse("seed = -1").is_err());
    }
}
