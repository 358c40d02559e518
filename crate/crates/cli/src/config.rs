//! Line-oriented `key = value` run configuration.

use anyhow::{anyhow, bail, Context, Result};
use maskbnn::adders::AdderTopology;
use maskbnn::bnn::{regfile_depth, ScheduleConfig, Shuffle};
use maskbnn::leakage::{LeakModel, Variant};
use maskbnn::netlist::ArrivalPolicy;
use maskbnn::prng::{Iv, Key, PrngMode};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantName {
    Unmasked,
    MaskedRca,
    MaskedKsa,
    MaskedKsaShuffled,
    TrichinaBank,
}

impl VariantName {
    const ALL: [(&'static str, VariantName); 5] = [
        ("unmasked", VariantName::Unmasked),
        ("masked-rca", VariantName::MaskedRca),
        ("masked-ksa", VariantName::MaskedKsa),
        ("masked-ksa-shuffled", VariantName::MaskedKsaShuffled),
        ("trichina-bank", VariantName::TrichinaBank),
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|&(_, v)| v)
    }

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, v)| *v == self).unwrap().0
    }

    pub fn variant(self) -> Variant {
        let masked = |topology, shuffle| Variant::Masked {
            topology,
            schedule: ScheduleConfig {
                throughput_optimized: true,
                shuffle,
            },
        };
        match self {
            VariantName::Unmasked => Variant::Unmasked,
            VariantName::MaskedRca => masked(AdderTopology::Rca, Shuffle::Off),
            VariantName::MaskedKsa => masked(AdderTopology::Ksa, Shuffle::Off),
            VariantName::MaskedKsaShuffled => masked(AdderTopology::Ksa, Shuffle::Rsi),
            VariantName::TrichinaBank => Variant::TrichinaBank,
        }
    }

    pub fn uses_model(self) -> bool {
        self != VariantName::TrichinaBank
    }

    /// Default hidden-layer size: one register-file depth of the adder.
    pub fn default_hidden(self, width: usize) -> usize {
        let topology = match self {
            VariantName::MaskedRca => AdderTopology::Rca,
            _ => AdderTopology::Ksa,
        };
        regfile_depth(topology, width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: VariantName,
    /// Model file, resolved against the config file's directory.
    pub model: Option<PathBuf>,
    /// Seed of the generated toy model when no file is given.
    pub model_seed: u64,
    pub n_in: usize,
    pub n_out: usize,
    pub hidden: Option<usize>,
    pub width: usize,
    pub pixel_width: usize,
    pub n_traces: u64,
    pub leak: LeakModel,
    pub key: Key,
    pub iv: Iv,
    pub prng: PrngMode,
    pub fixed_input: Option<Vec<u32>>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: VariantName::Unmasked,
            model: None,
            model_seed: 1,
            n_in: 16,
            n_out: 4,
            hidden: None,
            width: 12,
            pixel_width: 8,
            n_traces: 1000,
            leak: LeakModel::default(),
            key: [0; 10],
            iv: [0; 10],
            prng: PrngMode::Trivium,
            fixed_input: None,
            out: None,
        }
    }
}

fn parse_hex<const N: usize>(v: &str) -> Result<[u8; N]> {
    let bytes = hex::decode(v).map_err(|e| anyhow!("bad hex {v:?}: {e}"))?;
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| anyhow!("expected {N} hex bytes, got {}", b.len()))
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("bad number {v:?}: {e}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(prev) = seen.insert(k.to_string(), line_no) {
                bail!("line {line_no}: duplicate key {k:?} (first set on line {prev})");
            }
            c.set(k, v)
                .map_err(|e| anyhow!("line {line_no}: {k}: {e}"))?;
        }
        if let Some(m) = &c.model {
            c.model = Some(base.join(m));
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<()> {
        match k {
            "variant" => {
                self.variant = VariantName::parse(v).ok_or_else(|| {
                    let names: Vec<&str> = VariantName::ALL.iter().map(|(n, _)| *n).collect();
                    anyhow!(
                        "unknown variant {v:?} (expected one of {})",
                        names.join(", ")
                    )
                })?
            }
            "model" => self.model = Some(PathBuf::from(v)),
            "model_seed" => self.model_seed = parse_num(v)?,
            "inputs" => self.n_in = parse_num(v)?,
            "outputs" => self.n_out = parse_num(v)?,
            "hidden" => self.hidden = Some(parse_num(v)?),
            "width" => self.width = parse_num(v)?,
            "pixel_width" => self.pixel_width = parse_num(v)?,
            "n_traces" => self.n_traces = parse_num(v)?,
            "sigma" => self.leak.noise_sigma = parse_num(v)?,
            "alpha" => self.leak.glitch_weight = parse_num(v)?,
            "register_weight" => self.leak.register_weight = parse_num(v)?,
            "arrival" => {
                self.leak.arrival = match v {
                    "fixed" => ArrivalPolicy::Fixed,
                    "per-cycle-random" => ArrivalPolicy::PerCycleRandom,
                    _ => bail!("expected fixed or per-cycle-random, got {v:?}"),
                }
            }
            "key" => self.key = parse_hex(v)?,
            "iv" => self.iv = parse_hex(v)?,
            "prng" => {
                self.prng = match v {
                    "trivium" => PrngMode::Trivium,
                    "zero" => PrngMode::Zero,
                    _ => bail!("expected trivium or zero, got {v:?}"),
                }
            }
            "fixed_input" => {
                self.fixed_input = Some(
                    v.split(|ch: char| ch == ',' || ch.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(parse_num)
                        .collect::<Result<_>>()?,
                )
            }
            "out" => self.out = Some(PathBuf::from(v)),
            _ => bail!("unknown key"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.n_traces < 2 {
            bail!("n_traces must be at least 2, got {}", self.n_traces);
        }
        self.leak.validate().map_err(|e| anyhow!("{e}"))?;
        if self.model.is_some() && !self.variant.uses_model() {
            bail!("variant {} takes no model", self.variant.name());
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.hidden
            .unwrap_or_else(|| self.variant.default_hidden(self.width))
    }

    /// Resolved settings in config syntax, for the manifest.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("variant", self.variant.name().into());
        if let Some(m) = &self.model {
            kv("model", m.display().to_string());
        } else if self.variant.uses_model() {
            kv("model_seed", self.model_seed.to_string());
            kv("inputs", self.n_in.to_string());
            kv("outputs", self.n_out.to_string());
            kv("hidden", self.hidden().to_string());
            kv("width", self.width.to_string());
            kv("pixel_width", self.pixel_width.to_string());
        }
        kv("n_traces", self.n_traces.to_string());
        kv("sigma", self.leak.noise_sigma.to_string());
        kv("alpha", self.leak.glitch_weight.to_string());
        kv("register_weight", self.leak.register_weight.to_string());
        kv(
            "arrival",
            match self.leak.arrival {
                ArrivalPolicy::Fixed => "fixed",
                ArrivalPolicy::PerCycleRandom => "per-cycle-random",
            }
            .into(),
        );
        kv("key", hex::encode(self.key));
        kv("iv", hex::encode(self.iv));
        kv(
            "prng",
            match self.prng {
                PrngMode::Trivium => "trivium",
                PrngMode::Zero => "zero",
            }
            .into(),
        );
        if let Some(f) = &self.fixed_input {
            let v: Vec<String> = f.iter().map(|x| x.to_string()).collect();
            kv("fixed_input", v.join(" "));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let text = "\
# toy run
variant = masked-ksa   # trailing comment
n_traces = 50
sigma = 0.5
alpha = 0
arrival = fixed
key = 00112233445566778899
iv = ffeeddccbbaa99887766
prng = zero
fixed_input = 1, 2 3
hidden = 54
";
        let c = RunConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(c.variant, VariantName::MaskedKsa);
        assert_eq!(c.n_traces, 50);
        assert_eq!(c.leak.noise_sigma, 0.5);
        assert_eq!(c.leak.arrival, ArrivalPolicy::Fixed);
        assert_eq!(c.key[1], 0x11);
        assert_eq!(c.iv[0], 0xff);
        assert_eq!(c.prng, PrngMode::Zero);
        assert_eq!(c.fixed_input, Some(vec![1, 2, 3]));
        assert_eq!(c.hidden(), 54);
        let again = RunConfig::parse(&c.canonical(), Path::new(".")).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_name_the_line() {
        let err = |t: &str| format!("{:#}", RunConfig::parse(t, Path::new(".")).unwrap_err());
        assert!(err("variant = unmasked\nbogus = 1\n").contains("line 2"));
        assert!(err("\n\nkey = 0011\n").contains("line 3"));
        assert!(err("n_traces = 1\n").contains("at least 2"));
        assert!(err("sigma = 1\nsigma = 2\n").contains("duplicate"));
        assert!(err("variant = bad\n").contains("unknown variant"));
        assert!(err("just words\n").contains("line 1"));
    }

    #[test]
    fn default_hidden_follows_adder() {
        assert_eq!(VariantName::MaskedKsa.default_hidden(12), 27);
        assert_eq!(VariantName::MaskedRca.default_hidden(12), 61);
    }
}
