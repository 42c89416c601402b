//! Checkpoints: a little-endian binary tensor blob plus a JSON manifest.
//!
//! Blob layout: magic `DRWT`, u32 version, u32 tensor count, then per tensor
//! `u32 name_len, name, u32 ndim, u64 dims.., f32 data`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::detector::Detector;
use crate::error::{DrawError, Result};
use crate::isp::LearnableIsp;
use crate::mpf::{MpfConfig, MpfNet};
use crate::nn::ParamStore;

const MAGIC: &[u8; 4] = b"DRWT";
const VERSION: u32 = 1;

pub fn write_blob(path: &Path, entries: &[(String, ArrayD<f32>)]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, tensor) in entries {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        let shape = tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in tensor.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_blob(path: &Path) -> Result<Vec<(String, ArrayD<f32>)>> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let bad = |reason: &str| DrawError::Checkpoint(format!("{}: {reason}", path.display()));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    if u32::from_le_bytes(u32b) != VERSION {
        return Err(bad("unsupported version"));
    }
    r.read_exact(&mut u32b)?;
    let count = u32::from_le_bytes(u32b) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut u32b)?;
        let name_len = u32::from_le_bytes(u32b) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("non-utf8 tensor name"))?;
        r.read_exact(&mut u32b)?;
        let ndim = u32::from_le_bytes(u32b) as usize;
        let mut dims = Vec::with_capacity(ndim);
        let mut u64b = [0u8; 8];
        for _ in 0..ndim {
            r.read_exact(&mut u64b)?;
            dims.push(u64::from_le_bytes(u64b) as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = vec![0f32; n];
        let mut f32b = [0u8; 4];
        for v in data.iter_mut() {
            r.read_exact(&mut f32b)?;
            *v = f32::from_le_bytes(f32b);
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|_| bad("inconsistent tensor shape"))?;
        out.push((name, arr));
    }
    Ok(out)
}

/// Loads blob entries into an existing store by name, checking shapes.
pub fn load_into_store(path: &Path, store: &mut ParamStore<f32>) -> Result<()> {
    let entries = read_blob(path)?;
    let mut by_name: std::collections::HashMap<String, ArrayD<f32>> =
        entries.into_iter().collect();
    for i in 0..store.len() {
        let name = store.name(i).to_string();
        let tensor = by_name.remove(&name).ok_or_else(|| {
            DrawError::Checkpoint(format!("missing tensor {name} in {}", path.display()))
        })?;
        if tensor.shape() != store.value(i).shape() {
            return Err(DrawError::Checkpoint(format!(
                "shape mismatch for {name}: checkpoint {:?} vs model {:?}",
                tensor.shape(),
                store.value(i).shape()
            )));
        }
        *store.value_mut(i) = tensor;
    }
    if !by_name.is_empty() {
        let extra: Vec<_> = by_name.keys().take(3).cloned().collect();
        return Err(DrawError::Checkpoint(format!(
            "checkpoint has unexpected tensors (e.g. {extra:?})"
        )));
    }
    Ok(())
}

pub fn dump_store(store: &ParamStore<f32>) -> Vec<(String, ArrayD<f32>)> {
    store
        .iter()
        .map(|(n, v)| (n.to_string(), v.clone()))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct MpfManifest {
    config: MpfConfig,
    parameter_count: usize,
}

pub fn save_mpf(net: &MpfNet<f32>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_blob(&dir.join("mpf.bin"), &dump_store(&net.store))?;
    let manifest = MpfManifest {
        config: net.cfg.clone(),
        parameter_count: net.count_parameters(),
    };
    fs::write(
        dir.join("mpf.manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

pub fn load_mpf(dir: &Path) -> Result<MpfNet<f32>> {
    let manifest_path = dir.join("mpf.manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        DrawError::Checkpoint(format!("missing manifest {}: {e}", manifest_path.display()))
    })?;
    let manifest: MpfManifest = serde_json::from_str(&text)
        .map_err(|e| DrawError::Checkpoint(format!("bad manifest: {e}")))?;
    let mut net = MpfNet::new(manifest.config, 0)?;
    load_into_store(&dir.join("mpf.bin"), &mut net.store)?;
    if net.count_parameters() != manifest.parameter_count {
        return Err(DrawError::Checkpoint(format!(
            "manifest parameter_count {} disagrees with model {}",
            manifest.parameter_count,
            net.count_parameters()
        )));
    }
    Ok(net)
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectorManifest {
    architecture_id: String,
    parameter_count: usize,
}

pub fn save_detector(det: &Detector<f32>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_blob(&dir.join("detector.bin"), &dump_store(&det.store))?;
    let manifest = DetectorManifest {
        architecture_id: det.architecture_id.clone(),
        parameter_count: det.count_parameters(),
    };
    fs::write(
        dir.join("detector.manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

pub fn load_detector(dir: &Path) -> Result<Detector<f32>> {
    let text = fs::read_to_string(dir.join("detector.manifest.json"))
        .map_err(|e| DrawError::Checkpoint(format!("missing detector manifest: {e}")))?;
    let manifest: DetectorManifest = serde_json::from_str(&text)
        .map_err(|e| DrawError::Checkpoint(format!("bad manifest: {e}")))?;
    let mut det = Detector::new(&manifest.architecture_id, 0)?;
    load_into_store(&dir.join("detector.bin"), &mut det.store)?;
    Ok(det)
}

pub fn save_isp_surrogates(surrogates: &[LearnableIsp], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, s) in surrogates.iter().enumerate() {
        write_blob(&dir.join(format!("isp{i}.bin")), &dump_store(&s.store))?;
    }
    fs::write(
        dir.join("isp.manifest.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "count": surrogates.len() }))
            .expect("manifest serializes"),
    )?;
    Ok(())
}

pub fn load_isp_surrogates(dir: &Path) -> Result<Vec<LearnableIsp>> {
    let text = fs::read_to_string(dir.join("isp.manifest.json"))
        .map_err(|e| DrawError::Checkpoint(format!("missing ISP manifest: {e}")))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| DrawError::Checkpoint(format!("bad manifest: {e}")))?;
    let count = manifest["count"]
        .as_u64()
        .ok_or_else(|| DrawError::Checkpoint("ISP manifest missing count".into()))?
        as usize;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut s = LearnableIsp::new(i as u64);
        load_into_store(&dir.join(format!("isp{i}.bin")), &mut s.store)?;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let a = ArrayD::from_shape_fn(IxDyn(&[2, 3, 4]), |ix| {
            (ix[0] * 12 + ix[1] * 4 + ix[2]) as f32 * 0.37 - 1.0
        });
        let b = ArrayD::from_shape_fn(IxDyn(&[5]), |ix| ix[0] as f32);
        write_blob(
            &path,
            &[("alpha".into(), a.clone()), ("beta".into(), b.clone())],
        )
        .unwrap();
        let back = read_blob(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "alpha");
        assert_eq!(back[0].1, a);
        assert_eq!(back[1].1, b);
    }

    #[test]
    fn mpf_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MpfConfig {
            c_f: 8,
            n_blocks: 1,
            ..MpfConfig::default()
        };
        let net: MpfNet<f32> = MpfNet::new(cfg, 3).unwrap();
        save_mpf(&net, dir.path()).unwrap();
        let loaded = load_mpf(dir.path()).unwrap();
        assert_eq!(loaded.count_parameters(), net.count_parameters());
        for i in 0..net.store.len() {
            assert_eq!(net.store.value(i), loaded.store.value(i));
        }
    }

    #[test]
    fn missing_checkpoint_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_mpf(dir.path()),
            Err(DrawError::Checkpoint(_))
        ));
    }
}
