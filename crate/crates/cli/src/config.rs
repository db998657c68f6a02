use std::io::Write;
use std::path::{Path, PathBuf};

use netobserve::design::PoleParams;
use netobserve::obsv::NumericOptions;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

/// Run configuration loaded with `--config`. Flags override every field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Rank tolerance for numeric observability checks.
    pub rank_tol: Option<f64>,
    /// Largest state dimension accepted by numeric checks.
    pub obsv_cap: Option<usize>,
    pub alpha: Option<f64>,
    pub q_scale: Option<f64>,
    pub r_scale: Option<f64>,
    pub dt: Option<f64>,
    pub tf: Option<f64>,
    pub paths: Paths,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub graph: Option<PathBuf>,
    pub sensors: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub plant: Option<PathBuf>,
    pub f0: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(path.display(), e))
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }

    pub fn numeric_options(&self) -> NumericOptions {
        let mut opts = NumericOptions::default();
        if let Some(cap) = self.obsv_cap {
            opts.cap = cap;
        }
        opts.tol = self.rank_tol.or(opts.tol);
        opts
    }

    pub fn pole_params(&self, flags: &PoleFlags, base: PoleParams) -> PoleParams {
        PoleParams {
            alpha: flags.alpha.or(self.alpha).unwrap_or(base.alpha),
            q_scale: flags.q_scale.or(self.q_scale).unwrap_or(base.q_scale),
            r_scale: flags.r_scale.or(self.r_scale).unwrap_or(base.r_scale),
        }
    }

    pub fn dt(&self, flag: Option<f64>, default: f64) -> f64 {
        flag.or(self.dt).unwrap_or(default)
    }

    pub fn tf(&self, flag: Option<f64>, default: f64) -> f64 {
        flag.or(self.tf).unwrap_or(default)
    }
}

#[derive(Debug, Clone, Default, clap::Args, Serialize)]
pub struct PoleFlags {
    /// Closed-loop shift: observer poles are placed left of this value.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Scale of the state weight `Q = q I`.
    #[arg(long)]
    pub q_scale: Option<f64>,
    /// Scale of the input weight `R = r I`.
    #[arg(long)]
    pub r_scale: Option<f64>,
}

/// Picks the flag value, then the config value, or fails with a usage error.
pub fn require_path(flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (flag or config paths.{name})")))
}

/// FNV-1a digest over the contents of the input files, in order.
pub fn input_digest(paths: &[PathBuf]) -> Result<String> {
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(std::fs::read(p).map_err(|e| CliError::input(p.display(), e))?);
        bytes.push(0);
    }
    Ok(format!("{:016x}", netobserve::rng::fnv1a(&bytes)))
}

/// Provenance recorded at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Header {
    /// Hashes the effective settings of a run. Paths are excluded so that the
    /// same inputs copied elsewhere give the same artifact.
    pub fn new(command: &'static str, seed: u64, settings: &impl Serialize) -> Self {
        let canonical = serde_json::to_string(&json!({ "command": command, "seed": seed, "settings": settings }))
            .expect("settings serialize");
        Self {
            command,
            seed,
            config_hash: format!("{:016x}", netobserve::rng::fnv1a(canonical.as_bytes())),
        }
    }

    /// `#` comment lines for CSV and edge-list outputs.
    pub fn comment_block(&self) -> String {
        format!(
            "# netobserve {core} (cli {cli})\n# command: {cmd}\n# seed: {seed}\n# config_hash: {hash}\n",
            core = netobserve::VERSION,
            cli = env!("CARGO_PKG_VERSION"),
            cmd = self.command,
            seed = self.seed,
            hash = self.config_hash,
        )
    }

    pub fn json(&self) -> Value {
        json!({
            "tool": "netobserve",
            "version": netobserve::VERSION,
            "cli_version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
        })
    }

    /// Puts the header under `"header"` in a JSON object payload.
    pub fn wrap(&self, payload: impl Serialize) -> Result<Value> {
        let mut map = match serde_json::to_value(payload)? {
            Value::Object(map) => map,
            other => {
                let mut map = Map::new();
                map.insert("result".into(), other);
                map
            }
        };
        map.insert("header".into(), self.json());
        Ok(Value::Object(map))
    }
}

/// Writes to `out` or to stdout.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::input(path.display(), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn emit_json(out: Option<&Path>, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

/// Worker count: available cores, capped by `NETOBSERVE_THREADS` when set.
pub fn worker_threads() -> Result<usize> {
    let cores = std::thread::available_parallelism().map_or(1, usize::from);
    match std::env::var("NETOBSERVE_THREADS") {
        Ok(v) => {
            let cap: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| CliError::Usage(format!("NETOBSERVE_THREADS must be a positive integer, got {v:?}")))?;
            Ok(cores.min(cap))
        }
        Err(_) => Ok(cores),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 1, "sede": 2}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"paths": {"grpah": "x"}}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "alpha": -5, "paths": {"graph": "g.edges"}}"#).unwrap();
        assert_eq!(cfg.seed(None), 7);
        assert_eq!(cfg.seed(Some(3)), 3);
        assert_eq!(cfg.paths.graph.as_deref(), Some(Path::new("g.edges")));
    }

    #[test]
    fn flags_override_config_poles() {
        let cfg = RunConfig {
            alpha: Some(-5.0),
            q_scale: Some(2.0),
            ..RunConfig::default()
        };
        let flags = PoleFlags {
            alpha: Some(-7.0),
            ..PoleFlags::default()
        };
        let p = cfg.pole_params(&flags, PoleParams::default());
        assert_eq!((p.alpha, p.q_scale, p.r_scale), (-7.0, 2.0, PoleParams::default().r_scale));
    }

    #[test]
    fn header_hash_tracks_settings() {
        let a = Header::new("netgen", 1, &json!({"n": 10}));
        assert_eq!(a, Header::new("netgen", 1, &json!({"n": 10})));
        assert_ne!(a.config_hash, Header::new("netgen", 1, &json!({"n": 11})).config_hash);
        assert_ne!(a.config_hash, Header::new("netgen", 2, &json!({"n": 10})).config_hash);
        let block = a.comment_block();
        assert!(block.lines().all(|l| l.starts_with("# ")));
        assert!(block.contains("# seed: 1\n"));
    }

    #[test]
    fn wrap_keeps_payload_and_adds_header() {
        let h = Header::new("check", 0, &json!({}));
        let v = h.wrap(json!({"structural": true})).unwrap();
        assert_eq!(v["structural"], true);
        assert_eq!(v["header"]["seed"], 0);
    }
}
