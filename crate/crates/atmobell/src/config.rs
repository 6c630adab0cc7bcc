//! Plain-text run configuration.
//!
//! The format is INI-like: `[section]` headers, `key = value` lines, `#`
//! comments. Unknown keys and unused sections are hard errors so that typos
//! cannot silently fall back to defaults.
//!
//! ```text
//! [source]
//! kind = pdc
//!
//! [detector]
//! eta_c = 0.3
//! nu = 1.7e-5
//!
//! [scenario]
//! kind = copropagating
//! channel = strong
//!
//! [grid]
//! xi = 0.01:0.31:0.02
//!
//! [run]
//! samples = 100000
//! seed = 7
//!
//! [strong]
//! kind = lognormal
//! mu = 7.49
//! sigma = 1.08
//! eta_m = 0.04
//! ```

use crate::channels::{
    ChannelScenario, EllipticBeamChannel, TransmittanceModel, TruncatedLogNormalChannel,
};
use crate::photocount::{DetectorParams, SourceModel};
use crate::{Error, Result};
use std::cell::Cell;
use std::path::{Path, PathBuf};

/// A fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: SourceModel,
    pub detector: DetectorParams,
    pub scenario: ChannelScenario,
    /// Squeezing grid for the scan-squeezing command.
    pub xi_grid: Vec<f64>,
    /// Postselection-threshold grid for the scan-postselection command.
    pub eta_ps_grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

struct Entry {
    key: String,
    value: String,
    line: usize,
    used: Cell<bool>,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
    used: Cell<bool>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.iter().find(|e| e.key == key)?;
        e.used.set(true);
        Some(e)
    }

    fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| Error::Config {
            line: self.line,
            message: format!("section [{}] is missing key `{}`", self.name, key),
        })
    }

    fn f64(&self, key: &str) -> Result<f64> {
        let e = self.require(key)?;
        e.value.parse().map_err(|_| Error::Config {
            line: e.line,
            message: format!("key `{key}` has non-numeric value `{}`", e.value),
        })
    }
}

fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(Error::Config {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            if sections.iter().any(|s| s.name == name) {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate section [{name}]"),
                });
            }
            sections.push(Section {
                name: name.to_string(),
                line: line_no,
                entries: Vec::new(),
                used: Cell::new(false),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let section = sections.last_mut().ok_or(Error::Config {
            line: line_no,
            message: "key-value pair before any [section] header".into(),
        })?;
        let key = key.trim().to_string();
        if section.entries.iter().any(|e| e.key == key) {
            return Err(Error::Config {
                line: line_no,
                message: format!("duplicate key `{key}` in section [{}]", section.name),
            });
        }
        section.entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line: line_no,
            used: Cell::new(false),
        });
    }
    Ok(sections)
}

/// Parses a grid value: either a comma list `0.1,0.2,0.3` or an inclusive
/// range `start:stop:step`.
pub fn parse_grid(value: &str) -> Option<Vec<f64>> {
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() != 3 {
            return None;
        }
        let start: f64 = parts[0].trim().parse().ok()?;
        let stop: f64 = parts[1].trim().parse().ok()?;
        let step: f64 = parts[2].trim().parse().ok()?;
        if !(step > 0.0) || stop < start {
            return None;
        }
        let count = ((stop - start) / step + 1.0 + 1e-9).floor() as usize;
        return Some((0..count).map(|i| start + i as f64 * step).collect());
    }
    let vals: Option<Vec<f64>> = value
        .split(',')
        .map(|v| v.trim().parse::<f64>().ok())
        .collect();
    vals.filter(|v| !v.is_empty())
}

fn find_section<'a>(sections: &'a [Section], name: &str, ref_line: usize) -> Result<&'a Section> {
    let s = sections
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config {
            line: ref_line,
            message: format!("referenced section [{name}] does not exist"),
        })?;
    s.used.set(true);
    Ok(s)
}

fn build_model(
    sections: &[Section],
    section: &Section,
    base_dir: &Path,
    depth: usize,
) -> Result<TransmittanceModel> {
    if depth > 8 {
        return Err(Error::Config {
            line: section.line,
            message: format!("channel nesting too deep at [{}]", section.name),
        });
    }
    let kind = section.require("kind")?;
    let model = match kind.value.as_str() {
        "deterministic" => TransmittanceModel::Deterministic(section.f64("eta0")?),
        "lognormal" => TransmittanceModel::TruncatedLogNormal(TruncatedLogNormalChannel {
            mu: section.f64("mu")?,
            sigma: section.f64("sigma")?,
            eta_m: section.f64("eta_m")?,
        }),
        "elliptic" => TransmittanceModel::EllipticBeam(EllipticBeamChannel {
            rytov_sq: section.f64("rytov_sq")?,
            fresnel: section.f64("fresnel")?,
            beam_waist: section.f64("beam_waist")?,
            aperture: section.f64("aperture")?,
            length: section.f64("length")?,
            eta_m: section.f64("eta_m")?,
        }),
        "postselected" => {
            let inner_name = section.require("inner")?;
            let inner_section = find_section(sections, &inner_name.value, inner_name.line)?;
            if inner_section.name == section.name {
                return Err(Error::Config {
                    line: inner_name.line,
                    message: "a postselected channel cannot wrap itself".into(),
                });
            }
            TransmittanceModel::Postselected {
                inner: Box::new(build_model(sections, inner_section, base_dir, depth + 1)?),
                eta_ps: section.f64("eta_ps")?,
            }
        }
        "empirical" => {
            let entry = section.require("samples_file")?;
            let path: PathBuf = base_dir.join(&entry.value);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Config {
                line: entry.line,
                message: format!("cannot read samples_file {}: {e}", path.display()),
            })?;
            let mut samples = Vec::new();
            for (i, l) in text.lines().enumerate() {
                let l = l.trim();
                if l.is_empty() {
                    continue;
                }
                samples.push(l.parse::<f64>().map_err(|_| Error::Config {
                    line: entry.line,
                    message: format!("bad sample `{l}` on line {} of {}", i + 1, path.display()),
                })?);
            }
            TransmittanceModel::empirical(samples)?
        }
        other => {
            return Err(Error::Config {
                line: kind.line,
                message: format!("unknown channel kind `{other}`"),
            })
        }
    };
    model.validate().map_err(|e| Error::Config {
        line: section.line,
        message: format!("invalid channel [{}]: {e}", section.name),
    })?;
    Ok(model)
}

/// Parses a configuration file's text. `base_dir` anchors relative
/// `samples_file` paths (normally the directory containing the file).
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let sections = parse_sections(text)?;

    let source_section = find_section(&sections, "source", 1)?;
    let kind = source_section.require("kind")?;
    let source = match kind.value.as_str() {
        "pdc" => SourceModel::Pdc {
            xi: source_section.f64("xi")?,
        },
        "bell" => SourceModel::BellState,
        other => {
            return Err(Error::Config {
                line: kind.line,
                message: format!("unknown source kind `{other}` (expected pdc or bell)"),
            })
        }
    };

    let det_section = find_section(&sections, "detector", 1)?;
    let detector = DetectorParams {
        eta_c: det_section.f64("eta_c")?,
        nu: det_section.f64("nu")?,
    };
    detector.validate().map_err(|e| Error::Config {
        line: det_section.line,
        message: format!("invalid [detector]: {e}"),
    })?;

    let scen_section = find_section(&sections, "scenario", 1)?;
    let kind = scen_section.require("kind")?;
    let scenario = match kind.value.as_str() {
        "copropagating" => {
            let entry = scen_section.require("channel")?;
            let ch = find_section(&sections, &entry.value, entry.line)?;
            ChannelScenario::Copropagating(build_model(&sections, ch, base_dir, 0)?)
        }
        "counterpropagating" => {
            let ea = scen_section.require("channel_a")?;
            let eb = scen_section.require("channel_b")?;
            let ca = find_section(&sections, &ea.value, ea.line)?;
            let cb = find_section(&sections, &eb.value, eb.line)?;
            ChannelScenario::Counterpropagating(
                build_model(&sections, ca, base_dir, 0)?,
                build_model(&sections, cb, base_dir, 0)?,
            )
        }
        other => {
            return Err(Error::Config {
                line: kind.line,
                message: format!(
                    "unknown scenario kind `{other}` (expected copropagating or counterpropagating)"
                ),
            })
        }
    };

    let mut xi_grid = Vec::new();
    let mut eta_ps_grid = Vec::new();
    if let Some(grid) = sections.iter().find(|s| s.name == "grid") {
        grid.used.set(true);
        if let Some(e) = grid.get("xi") {
            xi_grid = parse_grid(&e.value).ok_or_else(|| Error::Config {
                line: e.line,
                message: format!("bad grid `{}` (use a,b,c or start:stop:step)", e.value),
            })?;
        }
        if let Some(e) = grid.get("eta_ps") {
            eta_ps_grid = parse_grid(&e.value).ok_or_else(|| Error::Config {
                line: e.line,
                message: format!("bad grid `{}` (use a,b,c or start:stop:step)", e.value),
            })?;
        }
    }

    let mut samples = 100_000usize;
    let mut seed = 0u64;
    if let Some(run) = sections.iter().find(|s| s.name == "run") {
        run.used.set(true);
        if let Some(e) = run.get("samples") {
            samples = e.value.parse().map_err(|_| Error::Config {
                line: e.line,
                message: format!("bad samples count `{}`", e.value),
            })?;
            if samples == 0 {
                return Err(Error::Config {
                    line: e.line,
                    message: "samples must be positive".into(),
                });
            }
        }
        if let Some(e) = run.get("seed") {
            seed = e.value.parse().map_err(|_| Error::Config {
                line: e.line,
                message: format!("bad seed `{}`", e.value),
            })?;
        }
    }

    for section in &sections {
        if !section.used.get() {
            return Err(Error::Config {
                line: section.line,
                message: format!("section [{}] is never referenced", section.name),
            });
        }
        for entry in &section.entries {
            if !entry.used.get() {
                return Err(Error::Config {
                    line: entry.line,
                    message: format!(
                        "unknown key `{}` in section [{}]",
                        entry.key, section.name
                    ),
                });
            }
        }
    }

    Ok(RunConfig {
        source,
        detector,
        scenario,
        xi_grid,
        eta_ps_grid,
        samples,
        seed,
    })
}

/// Reads and parses a configuration file from disk.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}
