//! `run.json` records: what ran, with which arguments and seeds, on which
//! input bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dwspectral::image::{read_json, write_json, StackManifest};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Default, Serialize)]
pub struct RunRecord {
    pub subcommand: &'static str,
    pub version: &'static str,
    pub args: Value,
    pub seeds: BTreeMap<&'static str, u64>,
    /// Input path as given on the command line mapped to its SHA-256.
    pub inputs: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(subcommand: &'static str, args: &impl Serialize) -> Result<Self> {
        Ok(RunRecord {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            args: serde_json::to_value(args)?,
            ..RunRecord::default()
        })
    }

    pub fn seed(&mut self, name: &'static str, value: u64) {
        self.seeds.insert(name, value);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    /// Records a stack manifest together with every band file it lists.
    pub fn stack_input(&mut self, manifest: &Path) -> Result<()> {
        self.input(manifest)?;
        let m: StackManifest = read_json(manifest)?;
        let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
        for band in &m.bands {
            let p: PathBuf = dir.join(band);
            if p.is_file() {
                self.input(&p)?;
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(self, dir.join("run.json"))?;
        Ok(())
    }
}
