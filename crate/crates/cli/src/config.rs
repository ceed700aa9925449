//! JSON config files, catalog loading and small argument parsers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use mlti::costs::MagicCatalog;

use crate::error::{CliError, CliResult};

/// Optional defaults read with `--config`. Command-line flags win.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pphys: Option<Vec<f64>>,
    pub target: Option<f64>,
    pub levels: Option<String>,
    pub r: Option<Vec<usize>>,
    pub catalog: Option<PathBuf>,
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub dims: Option<Vec<String>>,
    pub consume_k: Option<bool>,
    pub literal_s61: Option<bool>,
    pub gate: Option<bool>,
    pub allow_placeholder: Option<bool>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => read_json(p),
            None => Ok(RunConfig::default()),
        }
    }
}

/// Loads the catalog, or the built-in placeholder when no path is given.
/// Placeholder data is refused unless `allow_placeholder` is set.
pub fn load_catalog(path: Option<&Path>, allow_placeholder: bool) -> CliResult<MagicCatalog> {
    let catalog = match path {
        Some(p) => read_json::<MagicCatalog>(p)?,
        None => MagicCatalog::placeholder(),
    };
    if catalog.is_placeholder() && !allow_placeholder {
        return Err(CliError::input(match path {
            Some(p) => format!(
                "{} is a placeholder catalog; supply measured magic-state costs \
                 or pass --allow-placeholder",
                p.display()
            ),
            None => "no --catalog given; supply one or pass --allow-placeholder".into(),
        }));
    }
    if catalog.is_placeholder() {
        log::warn!("using placeholder magic-state catalog; volumes are shape-only");
    }
    Ok(catalog)
}

/// `12`, `4..25` or `4..=25`; both ends inclusive.
pub fn parse_levels(s: &str) -> CliResult<(u32, u32)> {
    let bad = || CliError::input(format!("invalid level range `{s}` (expected L or A..B)"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
    if lo < 3 || lo > hi {
        return Err(CliError::input(format!(
            "level range `{s}` must satisfy 3 <= A <= B"
        )));
    }
    Ok((lo, hi))
}

/// `3x9` → (d_x, d_z).
pub fn parse_dims(s: &str) -> CliResult<(u32, u32)> {
    let bad = || {
        CliError::input(format!(
            "invalid patch dims `{s}` (expected DXxDZ, e.g. 3x9)"
        ))
    };
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

/// Reads MLTI_THREADS and caps the worker pool.
pub fn apply_thread_limit() -> CliResult<()> {
    let Ok(v) = std::env::var("MLTI_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::input(format!("MLTI_THREADS = `{v}` is not a positive integer"))
    })?;
    if !mlti::exec::limit_threads(n) {
        log::debug!("thread limit {n} not applied (pool already running or no parallel build)");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_ranges() {
        assert_eq!(parse_levels("4..25").unwrap(), (4, 25));
        assert_eq!(parse_levels("4..=25").unwrap(), (4, 25));
        assert_eq!(parse_levels("12").unwrap(), (12, 12));
        assert!(parse_levels("2..5").is_err());
        assert!(parse_levels("9..5").is_err());
        assert!(parse_levels("x").is_err());
    }

    #[test]
    fn dims() {
        assert_eq!(parse_dims("3x9").unwrap(), (3, 9));
        assert!(parse_dims("39").is_err());
    }

    #[test]
    fn placeholder_policy() {
        assert!(load_catalog(None, false).is_err());
        assert!(load_catalog(None, true).unwrap().is_placeholder());
    }
}
