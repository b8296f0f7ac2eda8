//! Artifact writers: trajectory CSV, audit JSON, run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use passive_cbf::sim::{AuditSummary, ScenarioConfig, Trajectory};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TRAJECTORY_HEADER: &str = "t,q1,q2,p1,p2,u_des,u_safe,u_star,h,psi,S_cl,K_e,H,p_safe,d_p,passivity_ok,singular_step";

/// Renders a trajectory. Numbers use Rust's shortest round-trip formatting,
/// which is locale independent. Vector columns beyond the model's size are
/// left empty, as are `h` and `psi` when no barrier is configured.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(160 * traj.records.len() + TRAJECTORY_HEADER.len());
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    let num = |out: &mut String, v: Option<f64>| {
        if let Some(v) = v {
            write!(out, "{v}").unwrap();
        }
        out.push(',');
    };
    for r in &traj.records {
        num(&mut out, Some(r.t));
        for v in [r.q.get(0), r.q.get(1), r.p.get(0), r.p.get(1)] {
            num(&mut out, v.copied());
        }
        for u in [&r.u_des, &r.u_safe, &r.u_star] {
            num(&mut out, u.get(0).copied());
        }
        for v in [r.h, r.psi, Some(r.s_cl), Some(r.k_e), Some(r.hamiltonian), Some(r.p_safe), Some(r.d_p)] {
            num(&mut out, v);
        }
        writeln!(out, "{},{}", u8::from(r.passivity_ok), u8::from(r.singular_step)).unwrap();
    }
    out
}

#[derive(Serialize)]
pub struct AuditFile<'a> {
    pub scenario: &'a str,
    pub dt: f64,
    #[serde(flatten)]
    pub audit: &'a AuditSummary,
}

/// Reproducibility record for one invocation.
#[derive(Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub suite: &'static str,
    /// SHA-256 over the canonical TOML of the effective configuration.
    pub config_sha256: String,
    pub outputs: Vec<PathBuf>,
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_canonical_toml().as_bytes()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}
