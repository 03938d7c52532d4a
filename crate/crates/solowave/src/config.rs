//! `key = value` configuration files and the resolved run manifest.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Later sources override earlier ones: defaults, then the preset,
//! then a config file, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use solowave_core::fft::StftParams;
use solowave_core::losses::{LossWeights, MssConfig};
use solowave_core::nets::Fusion;
use solowave_core::pyramid::{NoiseBand, ScaleLadder};
use solowave_core::trainer::{InpaintMask, TrainConfig};

use crate::{Error, Result};

/// Loss-weight regime of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Preset {
    Music,
    #[default]
    Speech,
}

impl Preset {
    pub fn weights(self) -> LossWeights {
        match self {
            Preset::Music => LossWeights::music(),
            Preset::Speech => LossWeights::speech(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Music => "music",
            Preset::Speech => "speech",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "music" => Ok(Preset::Music),
            "speech" => Ok(Preset::Speech),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected music or speech)"))),
        }
    }
}

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(pub BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(d) => Error::format(path, d),
            other => other,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }
}

/// Everything a training command needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_preset(Preset::default())
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        Self { preset, train: TrainConfig { weights: preset.weights(), ..TrainConfig::default() } }
    }

    /// Resolves `kv` on top of the defaults. A `preset` key selects the base
    /// loss weights; explicit weight keys override them.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let preset = kv.get("preset").map(str::parse).transpose()?.unwrap_or_default();
        let mut cfg = Self::with_preset(preset);
        cfg.apply(kv)?;
        Ok(cfg)
    }

    /// Applies every key of `kv`; unknown keys are errors.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        let t = &mut self.train;
        let mut gap: (Option<usize>, Option<usize>) = (None, None);
        for (k, v) in &kv.0 {
            let k = k.as_str();
            match k {
                "preset" => {
                    self.preset = v.parse()?;
                    t.weights = self.preset.weights();
                }
                "seed" => t.seed = parse(k, v)?,
                "epochs" => t.epochs = parse(k, v)?,
                "lr" => t.lr = parse(k, v)?,
                "lr_drop_factor" => t.lr_drop_factor = parse(k, v)?,
                "lr_drop_epoch" => t.lr_drop_epoch = Some(parse(k, v)?),
                "adam_beta1" => t.adam_betas.0 = parse(k, v)?,
                "adam_beta2" => t.adam_betas.1 = parse(k, v)?,
                "d_steps" => t.d_steps_per_epoch = parse(k, v)?,
                "g_steps" => t.g_steps_per_epoch = parse(k, v)?,
                "divergence_patience" => t.divergence_patience = parse(k, v)?,
                "alpha1" | "alpha2" | "lambda_gp" => {}
                "blocks" => t.net.n_blocks = parse(k, v)?,
                "kernel" => t.net.kernel = parse(k, v)?,
                "channels_coarse" => t.net.channels_coarse = parse(k, v)?,
                "channels_fine" => t.net.channels_fine = parse(k, v)?,
                "leaky_slope" => t.net.leaky_slope = parse(k, v)?,
                "pe_coeffs" => t.net.pe_coeffs = parse_list(k, v)?,
                "fusion" => {
                    t.net.fusion = match v.as_str() {
                        "sum" => Fusion::Sum,
                        "concat" => Fusion::Concat,
                        _ => return Err(Error::Config(format!("fusion: expected sum or concat, got {v:?}"))),
                    }
                }
                "noise_scale" => t.pyramid.noise_scale = parse(k, v)?,
                "noise_band" => {
                    t.pyramid.noise_band = match v.as_str() {
                        "added" => NoiseBand::Added,
                        "next_finer" => NoiseBand::NextFiner,
                        _ => return Err(Error::Config(format!("noise_band: expected added or next_finer, got {v:?}"))),
                    }
                }
                "ladder" => t.ladder = Some(ScaleLadder::new(parse_list(k, v)?)?),
                "coarsest" => t.coarsest = Some(parse(k, v)?),
                "mss" => t.mss = parse_mss(v)?,
                "gap_start" => gap.0 = Some(parse(k, v)?),
                "gap_end" => gap.1 = Some(parse(k, v)?),
                _ => return Err(Error::Config(format!("unknown key {k:?}"))),
            }
        }
        // weights after the preset, whatever the key order
        for (key, slot) in [
            ("alpha1", &mut t.weights.alpha1),
            ("alpha2", &mut t.weights.alpha2),
            ("lambda_gp", &mut t.weights.lambda_gp),
        ] {
            if let Some(v) = kv.get(key) {
                *slot = parse(key, v)?;
            }
        }
        match gap {
            (Some(a), Some(b)) if b >= a => t.inpaint = Some(InpaintMask { gap_start: a, gap_end: b }),
            (None, None) => {}
            _ => return Err(Error::Config("gap_start and gap_end must be given together, start first".into())),
        }
        Ok(())
    }

    /// Fully resolved configuration in the file format, so that a run can
    /// be repeated from its manifest.
    pub fn manifest(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("preset", self.preset.name().into());
        line("seed", t.seed.to_string());
        line("epochs", t.epochs.to_string());
        line("lr", t.lr.to_string());
        line("lr_drop_factor", t.lr_drop_factor.to_string());
        line("lr_drop_epoch", t.drop_epoch().to_string());
        line("adam_beta1", t.adam_betas.0.to_string());
        line("adam_beta2", t.adam_betas.1.to_string());
        line("d_steps", t.d_steps_per_epoch.to_string());
        line("g_steps", t.g_steps_per_epoch.to_string());
        line("divergence_patience", t.divergence_patience.to_string());
        line("alpha1", t.weights.alpha1.to_string());
        line("alpha2", t.weights.alpha2.to_string());
        line("lambda_gp", t.weights.lambda_gp.to_string());
        line("blocks", t.net.n_blocks.to_string());
        line("kernel", t.net.kernel.to_string());
        line("channels_coarse", t.net.channels_coarse.to_string());
        line("channels_fine", t.net.channels_fine.to_string());
        line("leaky_slope", t.net.leaky_slope.to_string());
        line("pe_coeffs", join(&t.net.pe_coeffs));
        line("fusion", if t.net.fusion == Fusion::Sum { "sum" } else { "concat" }.into());
        line("noise_scale", t.pyramid.noise_scale.to_string());
        line(
            "noise_band",
            if t.pyramid.noise_band == NoiseBand::Added { "added" } else { "next_finer" }.into(),
        );
        if let Some(l) = &t.ladder {
            line("ladder", join(l.rates()));
        }
        if let Some(n) = t.coarsest {
            line("coarsest", n.to_string());
        }
        line("mss", format_mss(&t.mss));
        if let Some(m) = t.inpaint {
            line("gap_start", m.gap_start.to_string());
            line("gap_end", m.gap_end.to_string());
        }
        s
    }
}

/// `window/hop/fft;…`, all frames centered.
fn parse_mss(v: &str) -> Result<MssConfig> {
    let sets = v
        .split(';')
        .map(|set| {
            let p: Vec<usize> = set.split('/').map(|x| parse("mss", x.trim())).collect::<Result<_>>()?;
            match p[..] {
                [window, hop, fft_size] => Ok(StftParams { window, hop, fft_size, center: true }),
                _ => Err(Error::Config(format!("mss: expected window/hop/fft, got {set:?}"))),
            }
        })
        .collect::<Result<_>>()?;
    Ok(MssConfig { sets })
}

fn format_mss(m: &MssConfig) -> String {
    m.sets.iter().map(|p| format!("{}/{}/{}", p.window, p.hop, p.fft_size)).collect::<Vec<_>>().join(";")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let music = RunConfig::with_preset(Preset::Music).train.weights;
        assert_eq!((music.alpha1, music.alpha2), (0.0, 1e-4));
        let speech = RunConfig::default().train.weights;
        assert_eq!((speech.alpha1, speech.alpha2), (10.0, 0.0));
    }

    #[test]
    fn explicit_weights_override_the_preset_in_any_order() {
        let kv = KeyValues::parse("alpha2 = 0.5\npreset = music\n").unwrap();
        let cfg = RunConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.preset, Preset::Music);
        assert_eq!((cfg.train.weights.alpha1, cfg.train.weights.alpha2), (0.0, 0.5));
    }

    #[test]
    fn manifest_round_trips() {
        let kv = KeyValues::parse(
            "# comment\npreset = music\nseed = 9\nepochs = 12\nblocks = 7\nladder = 1000, 2000, 4000\ncoarsest = 2\n\
             fusion = concat\nmss = 64/16/64;128/32/128\ngap_start = 10\ngap_end = 20\n",
        )
        .unwrap();
        let cfg = RunConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.train.net.n_blocks, 7);
        assert_eq!(cfg.train.ladder.as_ref().unwrap().rates(), &[1000, 2000, 4000]);
        let again = RunConfig::from_key_values(&KeyValues::parse(&cfg.manifest()).unwrap()).unwrap();
        let mut expected = cfg.clone();
        expected.train.lr_drop_epoch = Some(cfg.train.drop_epoch());
        assert_eq!(again, expected);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(RunConfig::from_key_values(&KeyValues::parse("bogus = 1").unwrap()).is_err());
        assert!(RunConfig::from_key_values(&KeyValues::parse("epochs = many").unwrap()).is_err());
        assert!(RunConfig::from_key_values(&KeyValues::parse("preset = jazz").unwrap()).is_err());
        assert!(RunConfig::from_key_values(&KeyValues::parse("gap_start = 3").unwrap()).is_err());
    }
}
