//! Checkpoints: magic, LE u64 header length, JSON header, then every
//! parameter as a little-endian f64 (weights row-major, then bias, per layer).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec};
use super::system::{EnhancementSystem, FeatureNormalizer};
use crate::bands::BandLayout;
use crate::costs::CostKind;
use crate::error::{Error, Result};
use crate::stft::StftConfig;

const MAGIC: &[u8; 8] = b"MLPCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: MlpSpec,
    /// 1-based band index.
    pub band: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub cost: CostKind,
    pub seed: u64,
    pub batch_norm: bool,
}

pub fn save_network(path: &Path, net: &Mlp, header: &CheckpointHeader) -> Result<()> {
    if &header.spec != net.spec() {
        return Err(Error::invalid("header spec differs from the network"));
    }
    let json = serde_json::to_vec(header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<(Mlp, CheckpointHeader)> {
    let mut r = BufReader::new(File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format(format!("{} is not a network checkpoint", path.display())));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| Error::format("header too large"))?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let mut params = vec![0.0; header.spec.param_count()];
    let mut buf = [0u8; 8];
    for p in &mut params {
        r.read_exact(&mut buf)?;
        *p = f64::from_le_bytes(buf);
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::format("trailing bytes after parameters"));
    }
    let mut net = Mlp::zeros(header.spec.clone())?;
    net.set_params(&params)?;
    Ok((net, header))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SystemManifest {
    cost: CostKind,
    #[serde(rename = "N")]
    n: usize,
    stft: StftConfig,
    sample_rate_hz: u32,
    normalizer: FeatureNormalizer,
    seed: u64,
}

fn band_file(dir: &Path, j: usize) -> PathBuf {
    dir.join(format!("band_{j:02}.ckpt"))
}

/// Writes `system.json` and one checkpoint per band into `dir`.
pub fn save_system(dir: &Path, system: &EnhancementSystem, seed: u64) -> Result<()> {
    system.validate()?;
    fs::create_dir_all(dir)?;
    for (i, net) in system.networks.iter().enumerate() {
        let header = CheckpointHeader {
            spec: net.spec().clone(),
            band: i + 1,
            n: system.n,
            cost: system.cost,
            seed,
            batch_norm: false,
        };
        save_network(&band_file(dir, i + 1), net, &header)?;
    }
    let manifest = SystemManifest {
        cost: system.cost,
        n: system.n,
        stft: system.stft,
        sample_rate_hz: crate::signal::PIPELINE_RATE_HZ,
        normalizer: system.normalizer.clone(),
        seed,
    };
    fs::write(dir.join("system.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_system(dir: &Path) -> Result<EnhancementSystem> {
    let manifest_path = dir.join("system.json");
    if !manifest_path.exists() {
        return Err(Error::MissingArtifact(manifest_path));
    }
    let manifest: SystemManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let layout = BandLayout::for_stft(&manifest.stft, manifest.sample_rate_hz)?;
    let networks = (1..=layout.len())
        .map(|j| {
            let (net, header) = load_network(&band_file(dir, j))?;
            if header.band != j || header.n != manifest.n || header.cost != manifest.cost {
                return Err(Error::format(format!("checkpoint for band {j} does not match the system")));
            }
            Ok(net)
        })
        .collect::<Result<_>>()?;
    let system = EnhancementSystem {
        cost: manifest.cost,
        n: manifest.n,
        stft: manifest.stft,
        layout,
        normalizer: manifest.normalizer,
        networks,
    };
    system.validate()?;
    Ok(system)
}
