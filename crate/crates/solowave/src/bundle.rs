//! Run directories: a trained bundle plus the files that document it.
//!
//! ```text
//! manifest.txt       resolved configuration (key = value)
//! model.json         bundle metadata: coarsest scale, noise levels, lengths, …
//! ladder.txt         one `scale rate` line per trained scale
//! scale_<n>.params   generator tensors of scale n
//! z_star.f32         reconstruction noise, raw little-endian f32
//! loss_log.csv       per-epoch losses
//! outputs/           task outputs
//! provenance.jsonl   one record per task run
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use solowave_core::losses::LossWeights;
use solowave_core::nets::{Generator, NetSpec, ParamSet, Tensor};
use solowave_core::pyramid::ScaleLadder;
use solowave_core::trainer::{InpaintMask, LossRecord, ModelBundle};

use crate::config::RunConfig;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";
pub const MODEL: &str = "model.json";
pub const LADDER: &str = "ladder.txt";
pub const Z_STAR: &str = "z_star.f32";
pub const LOSS_LOG: &str = "loss_log.csv";
pub const OUTPUTS: &str = "outputs";
pub const PROVENANCE: &str = "provenance.jsonl";

const PARAMS_MAGIC: &str = "SOLOWAVE-PARAMS 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    coarsest: usize,
    spec: NetSpec,
    noise_std: Vec<f64>,
    lengths: Vec<usize>,
    input_peak: f32,
    weights: LossWeights,
    seed: u64,
    mask: Option<InpaintMask>,
}

pub fn params_path(dir: &Path, scale: usize) -> PathBuf {
    dir.join(format!("scale_{scale}.params"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Creates `dir` (and `outputs/`) and writes the manifest; done before any
/// training starts.
pub fn prepare_run_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let out = dir.join(OUTPUTS);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_file(&dir.join(MANIFEST), cfg.manifest().as_bytes())
}

pub fn save_bundle(dir: &Path, bundle: &ModelBundle) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = ModelMeta {
        coarsest: bundle.coarsest,
        spec: bundle.spec.clone(),
        noise_std: bundle.noise_std.clone(),
        lengths: bundle.lengths.clone(),
        input_peak: bundle.input_peak,
        weights: bundle.weights,
        seed: bundle.seed,
        mask: bundle.mask,
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write_file(&dir.join(MODEL), json.as_bytes())?;
    let ladder: String = bundle.ladder.rates().iter().rev().enumerate().map(|(n, r)| format!("{n} {r}\n")).collect();
    write_file(&dir.join(LADDER), ladder.as_bytes())?;
    for (n, g) in bundle.generators.iter().enumerate() {
        write_file(&params_path(dir, n), &encode_params(g.net.params()))?;
    }
    write_file(&dir.join(Z_STAR), &f32_bytes(&bundle.z_star))?;
    write_loss_log(&dir.join(LOSS_LOG), &bundle.log)
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let model_path = dir.join(MODEL);
    let meta: ModelMeta = serde_json::from_str(&read_text(&model_path)?)
        .map_err(|e| Error::format(&model_path, e.to_string()))?;
    let ladder = read_ladder(&dir.join(LADDER))?;
    let mut generators = Vec::with_capacity(meta.coarsest + 1);
    for n in 0..=meta.coarsest {
        let path = params_path(dir, n);
        let params = decode_params(&read_file(&path)?).map_err(|d| Error::format(&path, d))?;
        let channels = meta.spec.channels_for(n, meta.coarsest);
        let g = Generator::from_params(&meta.spec, channels, n == meta.coarsest, &params, true)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        generators.push(g);
    }
    let zpath = dir.join(Z_STAR);
    let z_star = bytes_f32(&read_file(&zpath)?).map_err(|d| Error::format(&zpath, d))?;
    let log_path = dir.join(LOSS_LOG);
    let log = if log_path.exists() { read_loss_log(&log_path)? } else { Vec::new() };
    let bundle = ModelBundle {
        ladder,
        coarsest: meta.coarsest,
        spec: meta.spec,
        generators,
        noise_std: meta.noise_std,
        lengths: meta.lengths,
        z_star,
        input_peak: meta.input_peak,
        weights: meta.weights,
        seed: meta.seed,
        mask: meta.mask,
        log,
    };
    bundle.validate().map_err(|e| Error::format(dir, e.to_string()))?;
    Ok(bundle)
}

/// Reads `scale rate` lines (scale 0 is the full rate).
fn read_ladder(path: &Path) -> Result<ScaleLadder> {
    let text = read_text(path)?;
    let mut rates = Vec::new();
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let mut it = line.split_whitespace();
        let (n, r) = (it.next(), it.next());
        let n: usize = n.and_then(|v| v.parse().ok()).ok_or_else(|| Error::format(path, format!("bad line {line:?}")))?;
        let r: u32 = r.and_then(|v| v.parse().ok()).ok_or_else(|| Error::format(path, format!("bad line {line:?}")))?;
        if n != i {
            return Err(Error::format(path, "scales must be listed in order from 0"));
        }
        rates.push(r);
    }
    rates.reverse();
    ScaleLadder::new(rates).map_err(|e| Error::format(path, e.to_string()))
}

fn f32_bytes(x: &[f32]) -> Vec<u8> {
    x.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn bytes_f32(b: &[u8]) -> std::result::Result<Vec<f32>, String> {
    if b.len() % 4 != 0 {
        return Err(format!("{} bytes is not a whole number of f32 values", b.len()));
    }
    Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Text header (one line per tensor: name, trainable flag, shape) followed
/// by the concatenated little-endian data.
pub fn encode_params(p: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "{PARAMS_MAGIC}").unwrap();
    writeln!(out, "tensors {}", p.tensors.len()).unwrap();
    for t in &p.tensors {
        let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
        writeln!(out, "{} {} {}", t.name, u8::from(t.trainable), shape.join("x")).unwrap();
    }
    for t in &p.tensors {
        out.extend(f32_bytes(&t.data));
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> std::result::Result<ParamSet, String> {
    let mut pos = 0;
    let mut next_line = || -> std::result::Result<&str, String> {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or("truncated header")? + pos;
        let line = std::str::from_utf8(&bytes[pos..end]).map_err(|_| "header is not UTF-8")?;
        pos = end + 1;
        Ok(line)
    };
    if next_line()? != PARAMS_MAGIC {
        return Err("not a parameter file".into());
    }
    let count: usize = next_line()?
        .strip_prefix("tensors ")
        .and_then(|v| v.parse().ok())
        .ok_or("missing tensor count")?;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next_line()?;
        let f: Vec<&str> = line.split(' ').collect();
        let [name, trainable, shape] = f[..] else {
            return Err(format!("bad tensor line {line:?}"));
        };
        let shape: Vec<usize> = if shape.is_empty() {
            Vec::new()
        } else {
            shape.split('x').map(|d| d.parse().map_err(|_| format!("bad shape {shape:?}"))).collect::<std::result::Result<_, _>>()?
        };
        tensors.push(Tensor { name: name.to_string(), shape, trainable: trainable == "1", data: Vec::new() });
    }
    let mut data = &bytes[pos..];
    for t in tensors.iter_mut() {
        let n = t.numel() * 4;
        if data.len() < n {
            return Err(format!("data of tensor {} is truncated", t.name));
        }
        t.data = bytes_f32(&data[..n])?;
        data = &data[n..];
    }
    if !data.is_empty() {
        return Err(format!("{} trailing bytes", data.len()));
    }
    Ok(ParamSet { tensors })
}

pub fn write_loss_log(path: &Path, log: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let res: csv::Result<()> = (|| {
        w.write_record(["epoch", "scale", "d_loss", "g_adv", "g_rec", "gp"])?;
        for r in log {
            w.write_record([
                r.epoch.to_string(),
                r.scale.to_string(),
                r.d_loss.to_string(),
                r.g_adv.to_string(),
                r.g_rec.to_string(),
                r.gp.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| Error::format(path, "bad loss record"))
            };
            Ok(LossRecord {
                epoch: f(0)? as usize,
                scale: f(1)? as usize,
                d_loss: f(2)?,
                g_adv: f(3)?,
                g_rec: f(4)?,
                gp: f(5)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_round_trip() {
        let p = ParamSet {
            tensors: vec![
                Tensor { name: "a.w".into(), shape: vec![2, 3], trainable: true, data: vec![1.0, -2.5, 3.0, 0.0, 1e-30, f32::MAX] },
                Tensor { name: "a.mean".into(), shape: vec![1], trainable: false, data: vec![0.25] },
            ],
        };
        let bytes = encode_params(&p);
        assert_eq!(decode_params(&bytes).unwrap(), p);
        assert!(decode_params(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_params(b"junk\n").is_err());
    }
}
