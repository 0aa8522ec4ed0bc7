//! Model checkpoints.
//!
//! ```text
//! OPDYNCK1
//! spec.variant=fan
//! ...
//! basis=IIX IIY ...
//! meta.seed=0
//! history=0 1.2e-1 1.3e-1
//! layout=layer0.weight 128 63 0
//! n_params=25279
//! end_header
//! <n_params little-endian f64 values>
//! ```
//!
//! Header floats use 17 significant digits, so a save/load cycle reproduces
//! every value bit for bit.

use std::io::{BufRead, Write};
use std::path::Path;

use super::network::{Layout, Network, NetworkSpec, Variant};
use super::train::EpochRecord;
use crate::error::{Error, Result};
use crate::pauli::PauliBasis;
use crate::trajectory::{fmt17, Metadata};

pub const CHECKPOINT_MAGIC: &str = "OPDYNCK1";
const END_HEADER: &str = "end_header";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub basis: PauliBasis,
    pub meta: Metadata,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn new(network: Network, basis: PauliBasis, meta: Metadata, history: Vec<EpochRecord>) -> Result<Self> {
        if basis.len() != network.spec().state_dim {
            return Err(Error::SizeMismatch {
                expected: network.spec().state_dim,
                got: basis.len(),
            });
        }
        Ok(Self {
            network,
            basis,
            meta,
            history,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = self.network.spec();
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "spec.variant={}", spec.variant)?;
        writeln!(w, "spec.state_dim={}", spec.state_dim)?;
        writeln!(w, "spec.append_time={}", spec.append_time)?;
        writeln!(w, "spec.depth={}", spec.depth)?;
        writeln!(w, "spec.hidden_width={}", spec.hidden_width)?;
        let (a, b, c) = spec.fan_partition;
        writeln!(w, "spec.fan_partition={a},{b},{c}")?;
        let freqs: Vec<String> = spec.frequencies.iter().map(|f| fmt17(*f)).collect();
        writeln!(w, "spec.frequencies={}", freqs.join(","))?;
        writeln!(w, "spec.train_frequencies={}", spec.train_frequencies)?;
        writeln!(w, "spec.readout_gain={}", fmt17(spec.readout_gain))?;
        writeln!(w, "basis={}", self.basis.labels().join(" "))?;
        for (k, v) in self.meta.iter() {
            writeln!(w, "meta.{k}={v}")?;
        }
        for r in &self.history {
            writeln!(w, "history={} {} {}", r.epoch, fmt17(r.train_loss), fmt17(r.val_loss))?;
        }
        for e in self.network.layout().entries() {
            writeln!(w, "layout={} {} {} {}", e.name, e.rows, e.cols, e.offset)?;
        }
        writeln!(w, "n_params={}", self.network.n_params())?;
        writeln!(w, "{END_HEADER}")?;
        for p in self.network.params() {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        const WHAT: &str = "checkpoint";
        let mut line = String::new();
        let mut lineno = 0;
        let mut next_line = |r: &mut R, line: &mut String| -> Result<Option<usize>> {
            line.clear();
            lineno += 1;
            if r.read_line(line)? == 0 {
                return Ok(None);
            }
            let trimmed = line.trim_end_matches(['\n', '\r']).len();
            line.truncate(trimmed);
            Ok(Some(lineno))
        };
        match next_line(&mut r, &mut line)? {
            Some(_) if line == CHECKPOINT_MAGIC => {}
            _ => return Err(Error::format(WHAT, 1, "bad magic line")),
        }
        let mut fields: Vec<(usize, String, String)> = Vec::new();
        loop {
            let Some(n) = next_line(&mut r, &mut line)? else {
                return Err(Error::format(WHAT, lineno, "missing end_header"));
            };
            if line == END_HEADER {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(WHAT, n, format!("expected key=value, got {line:?}")))?;
            fields.push((n, k.to_string(), v.to_string()));
        }
        let get = |key: &str| -> Result<(usize, &str)> {
            fields
                .iter()
                .find(|(_, k, _)| k == key)
                .map(|(n, _, v)| (*n, v.as_str()))
                .ok_or_else(|| Error::format(WHAT, 0, format!("missing {key}")))
        };
        fn parse<T: std::str::FromStr>(n: usize, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.trim().parse::<T>().map_err(|e| Error::format(WHAT, n, e.to_string()))
        }
        let (n, v) = get("spec.variant")?;
        let variant: Variant = v.parse().map_err(|e: Error| Error::format(WHAT, n, e.to_string()))?;
        let (n, v) = get("spec.state_dim")?;
        let state_dim = parse(n, v)?;
        let mut spec = NetworkSpec::new(variant, state_dim);
        let (n, v) = get("spec.append_time")?;
        spec.append_time = parse(n, v)?;
        let (n, v) = get("spec.depth")?;
        spec.depth = parse(n, v)?;
        let (n, v) = get("spec.hidden_width")?;
        spec.hidden_width = parse(n, v)?;
        let (n, v) = get("spec.fan_partition")?;
        let part: Vec<usize> = v.split(',').map(|x| parse(n, x)).collect::<Result<_>>()?;
        if part.len() != 3 {
            return Err(Error::format(WHAT, n, "fan_partition needs three values"));
        }
        spec.fan_partition = (part[0], part[1], part[2]);
        let (n, v) = get("spec.frequencies")?;
        spec.frequencies = if v.trim().is_empty() {
            Vec::new()
        } else {
            v.split(',').map(|x| parse(n, x)).collect::<Result<_>>()?
        };
        let (n, v) = get("spec.train_frequencies")?;
        spec.train_frequencies = parse(n, v)?;
        let (n, v) = get("spec.readout_gain")?;
        spec.readout_gain = parse(n, v)?;
        let (n, v) = get("basis")?;
        let labels: Vec<&str> = v.split_whitespace().collect();
        let basis = PauliBasis::from_labels(&labels).map_err(|e| Error::format(WHAT, n, e.to_string()))?;
        let mut meta = Metadata::new();
        let mut history = Vec::new();
        let mut layout_lines = Vec::new();
        for (n, k, v) in &fields {
            if let Some(key) = k.strip_prefix("meta.") {
                meta.set(key, v);
            } else if k == "history" {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::format(WHAT, *n, "history needs epoch, train and validation loss"));
                }
                history.push(EpochRecord {
                    epoch: parse(*n, parts[0])?,
                    train_loss: parse(*n, parts[1])?,
                    val_loss: parse(*n, parts[2])?,
                });
            } else if k == "layout" {
                layout_lines.push((*n, v.clone()));
            }
        }
        let layout: Layout = spec.layout().map_err(|e| Error::format(WHAT, 0, e.to_string()))?;
        if layout_lines.len() != layout.entries().len() {
            return Err(Error::format(WHAT, 0, "layout table does not match the network spec"));
        }
        for ((n, line), e) in layout_lines.iter().zip(layout.entries()) {
            let expected = format!("{} {} {} {}", e.name, e.rows, e.cols, e.offset);
            if line.trim() != expected {
                return Err(Error::format(WHAT, *n, format!("layout entry {line:?}, expected {expected:?}")));
            }
        }
        let (n, v) = get("n_params")?;
        let n_params: usize = parse(n, v)?;
        if n_params != layout.n_params() {
            return Err(Error::format(WHAT, n, "n_params does not match layout"));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * n_params {
            return Err(Error::format(
                WHAT,
                0,
                format!("expected {} parameter bytes, found {}", 8 * n_params, bytes.len()),
            ));
        }
        let params: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let network = Network::new(spec, params).map_err(|e| Error::format(WHAT, 0, e.to_string()))?;
        Checkpoint::new(network, basis, meta, history)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
